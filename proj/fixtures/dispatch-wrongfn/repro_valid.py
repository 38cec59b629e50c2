import sys
sys.path.insert(0, "src")
from ops import dispatch

if dispatch("sub", 7, 2) == 5:
    print("issue resolved")
else:
    print("issue reproduced")
