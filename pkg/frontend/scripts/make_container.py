"""Build the toy two-part model container used by the editor tests."""
import sys
from pathlib import Path

root = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(root / "tests"))

from fixtures import box_family_container  # noqa: E402

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "family.container"
    box_family_container().save(out)
    print("wrote %s" % out)
