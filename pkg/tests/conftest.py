import sys
from pathlib import Path

# make `from tests.test_greens import ...` work regardless of invocation dir
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
