import sys
sys.path.insert(0, "src")
from limits import clamp_count

if clamp_count(15) == 10:
    print("issue resolved")
else:
    print("issue reproduced")
