import sys
print("issue reproduced")
