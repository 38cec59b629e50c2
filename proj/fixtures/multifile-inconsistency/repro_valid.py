import sys
sys.path.insert(0, "src")
from report import report_capacity

if report_capacity(10) == "free slots: 0":
    print("issue resolved")
else:
    print("issue reproduced")
