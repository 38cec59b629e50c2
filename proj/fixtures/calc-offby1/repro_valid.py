import sys
sys.path.insert(0, "src")
from calc import total

if total([1, 2, 3]) == 6:
    print("issue resolved")
else:
    print("issue reproduced")
