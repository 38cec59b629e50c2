import sys
sys.path.insert(0, "src")
from table import render_table

try:
    render_table([])
    print("issue resolved")
except ValueError:
    print("issue reproduced")
