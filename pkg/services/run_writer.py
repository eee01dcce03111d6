import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List

import pandas as pd

logger = logging.getLogger(__name__)

# Configuration
FLOAT_FORMAT = "%.10g"


def dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class RunWriter:
    """
    Stages every output of a run in memory and writes them only on commit(),
    each through a temp file in the target directory and os.replace.
    A run that fails before commit leaves nothing behind.
    """

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self._staged: Dict[str, str] = {}

    def stage_text(self, name: str, text: str):
        if name in self._staged:
            raise ValueError(f"output {name} staged twice")
        self._staged[name] = text

    def stage_csv(self, name: str, frame: pd.DataFrame):
        self.stage_text(name, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))

    def stage_json(self, name: str, payload):
        self.stage_text(name, dump_json(payload))

    @property
    def staged(self) -> List[str]:
        return list(self._staged)

    def commit(self) -> List[Path]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self._staged.items():
            target = self.out_dir / name
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            written.append(target)
            logger.info(f"Wrote {target}")
        self._staged.clear()
        return written
