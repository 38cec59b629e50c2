print("issue resolved")
