"""Check the numbers quoted in README.md against the library.

Currently verifies the per-position logit storage figure. Exits non-zero on
any mismatch.
"""

import re
import sys
from pathlib import Path

from distill_scaling.kernels import logit_storage_bytes

README = Path(__file__).resolve().parents[1] / "README.md"
PATTERN = re.compile(r"(\d+)\s*[x×]\s*(\d+)\s*bytes\s*=\s*([\d,]+)\s*bytes\s*(?:≈|~)\s*(\d+)\s*KB")


def main() -> int:
    text = README.read_text(encoding="utf-8")
    m = PATTERN.search(text)
    if m is None:
        print("FAIL: no storage figure found in README.md")
        return 1
    vocab, width, total, kb = int(m[1]), int(m[2]), int(m[3].replace(",", "")), int(m[4])
    computed = logit_storage_bytes(vocab, width)
    ok = computed == total and round(computed / 1000) == kb and vocab == 32168 and width == 4
    status = "PASS" if ok else "FAIL"
    print(f"{status}: {vocab} x {width} bytes = {computed} bytes ~ {round(computed / 1000)} KB "
          f"(README says {total} bytes ~ {kb} KB)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
