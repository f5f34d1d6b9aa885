"""Locating the national data snapshots the experiments were run on.

The files are not redistributed with the package. Drop them into ``data/`` at
the repository root (or point the environment variables at them):

* Belgium: ``COVID19BE_HOSP.csv`` from epistat.sciensano.be, period
  2020-03-15 .. 2020-07-15 (``SHFORECAST_BELGIUM_CSV``)
* France: ``donnees-hospitalieres-covid19-2020-07-17-19h00.csv`` from
  data.gouv.fr, period 2020-03-18 .. 2020-07-17 (``SHFORECAST_FRANCE_CSV``)

Later releases of either file also work; rows outside the period are dropped.
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .data import ObservedSeries, load_series

DATA_DIR = Path(__file__).resolve().parents[2] / "data"


@dataclass(frozen=True)
class Snapshot:
    schema: str
    filename: str
    env_var: str
    first: dt.date
    last: dt.date

    def path(self) -> Optional[Path]:
        override = os.environ.get(self.env_var)
        candidate = Path(override) if override else DATA_DIR / self.filename
        return candidate if candidate.is_file() else None

    def load(self) -> ObservedSeries:
        path = self.path()
        if path is None:
            raise FileNotFoundError(
                f"{self.schema} snapshot not found: place {self.filename} in {DATA_DIR} or set {self.env_var}"
            )
        return load_series(path, self.schema, self.first, self.last)


BELGIUM = Snapshot("belgium", "COVID19BE_HOSP.csv", "SHFORECAST_BELGIUM_CSV", dt.date(2020, 3, 15), dt.date(2020, 7, 15))
FRANCE = Snapshot(
    "france",
    "donnees-hospitalieres-covid19-2020-07-17-19h00.csv",
    "SHFORECAST_FRANCE_CSV",
    dt.date(2020, 3, 18),
    dt.date(2020, 7, 17),
)
