import sys
sys.path.insert(0, "src")
from ops import dispatch

if dispatch("add", 2, 2) == 4:
    print("issue resolved")
else:
    print("issue reproduced")
