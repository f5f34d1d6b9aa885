import datetime as dt

import numpy as np
import pytest

from shforecast.model import SHParams, SHState, simulate

TRUE_BETA = 1e-5
TRUE_GAMMA = 0.08
TRUE_S0 = 2e4
TRUE_H0 = 50.0
START = dt.date(2020, 3, 15)


def noiseless_series(days=120, beta_bar=TRUE_BETA, gamma=TRUE_GAMMA, s0=TRUE_S0, h0=TRUE_H0, start=START):
    traj = simulate(SHState(s0, h0), SHParams(beta_bar, gamma), days)
    return traj, traj.to_observed(start)


@pytest.fixture(scope="session")
def synthetic():
    """Noiseless 121-day run of the generator used throughout the suite."""
    return noiseless_series()


def noisy_census(days, seed, scale=1.0, noise=0.03):
    traj = simulate(SHState(TRUE_S0 * scale, TRUE_H0 * scale), SHParams(TRUE_BETA / scale, TRUE_GAMMA), days - 1)
    rng = np.random.default_rng(seed)
    h = np.rint(traj.h * (1 + noise * rng.standard_normal(traj.h.size))).clip(min=0)
    e = np.rint(np.concatenate(([traj.e[0]], traj.e)) * (1 + 0.1 * rng.standard_normal(days))).clip(min=0)
    l = np.rint(np.concatenate(([traj.l[0]], traj.l)) * (1 + 0.1 * rng.standard_normal(days))).clip(min=0)
    return traj, h, e, l


def belgium_csv(days=60, seed=0, provinces=("Antwerpen", "Brussels", "Liège"), start=START):
    """Sciensano-layout text: per-province split of a noisy SH run, flows deliberately inconsistent."""
    _, h, e, l = noisy_census(days, seed)
    shares = np.linspace(1.0, 2.0, len(provinces))
    shares /= shares.sum()
    lines = ["DATE,PROVINCE,REGION,NR_REPORTING,TOTAL_IN,TOTAL_IN_ICU,TOTAL_IN_RESP,TOTAL_IN_ECMO,NEW_IN,NEW_OUT"]
    for k in range(days):
        day = (start + dt.timedelta(days=k)).isoformat()
        ph = np.floor(h[k] * shares)
        ph[-1] += h[k] - ph.sum()
        pe = np.floor(e[k] * shares)
        pe[-1] += e[k] - pe.sum()
        pl = np.floor(l[k] * shares)
        pl[-1] += l[k] - pl.sum()
        for j, prov in enumerate(provinces):
            lines.append(f"{day},{prov},X,10,{int(ph[j])},0,0,0,{int(pe[j])},{int(pl[j])}")
    return "\n".join(lines) + "\n"


def france_csv(days=60, seed=1, departments=("01", "75", "13"), start=dt.date(2020, 3, 18)):
    """data.gouv.fr-layout text with sexe strata 0/1/2 and cumulative rad/dc."""
    _, h, _, l = noisy_census(days, seed)
    cum = np.cumsum(l)
    rad = np.floor(0.8 * cum)
    dc = cum - rad
    lines = ['"dep";"sexe";"jour";"hosp";"rea";"rad";"dc"']
    n = len(departments)
    for k in range(days):
        day = (start + dt.timedelta(days=k)).isoformat()
        for j, dep in enumerate(departments):
            share = (lambda x: np.floor(x / n) + (x - n * np.floor(x / n) if j == n - 1 else 0))
            vals = [share(h[k]), share(rad[k]), share(dc[k])]
            lines.append(f'"{dep}";0;"{day}";{int(vals[0])};0;{int(vals[1])};{int(vals[2])}')
            for sexe in (1, 2):
                lines.append(f'"{dep}";{sexe};"{day}";{int(vals[0]) // 2};0;{int(vals[1]) // 2};{int(vals[2]) // 2}')
    return "\n".join(lines) + "\n"


ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split(".")[0]), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
