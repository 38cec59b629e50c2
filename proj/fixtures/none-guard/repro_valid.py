import sys
sys.path.insert(0, "src")
from config import get_setting

try:
    get_setting({}, "host")
    print("issue resolved")
except AttributeError:
    print("issue reproduced")
