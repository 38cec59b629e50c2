import sys
sys.path.insert(0, "src")
from slug import slugify

if slugify("Big Red Dog") == "big-red-dog":
    print("issue resolved")
else:
    print("issue reproduced")
