"""Regenerate the bundled ECDC-schema fixture.

The original ECDC case-distribution snapshot cannot be fetched from the build
environment, so the fixture is synthesized: each group's cumulative count
follows a reference square-root-scale four-parameter logistic curve
(reference Model 2 parameters and inflection dates), with
negative-binomial noise on the daily counts.  Africa is split across eight
member countries so the continent aggregation has something to sum.

Usage:  python scripts/make_fixture.py [OUT.csv]
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import sys
from pathlib import Path

import numpy as np

SEED = 20200615
FIRST = dt.date(2019, 12, 31)
LAST = dt.date(2020, 6, 15)
DISPERSION = 30.0

# name, geoId, code, population, continent, (phi1, phi2, phi3, phi4), inflection date
GROUPS = [
    ("Australia", "AU", "AUS", 25203200, "Oceania", (-1.16, 85.12, 13.14, 5.91), "2020-03-28"),
    ("China", "CN", "CHN", 1433783686, "Asia", (-11.62, 295.34, 12.65, 6.05), "2020-02-09"),
    ("France", "FR", "FRA", 67012883, "Europe", (-41.37, 388.79, 17.64, 10.80), "2020-04-04"),
    ("Germany", "DE", "DEU", 83019213, "Europe", (-99.75, 429.46, 13.39, 10.93), "2020-04-02"),
    ("Italy", "IT", "ITA", 60359546, "Europe", (-123.75, 492.90, 16.68, 14.29), "2020-03-31"),
    ("Russia", "RU", "RUS", 145872260, "Europe", (-39.47, 733.75, 34.47, 14.79), "2020-05-13"),
    ("Spain", "ES", "ESP", 46937060, "Europe", (-95.04, 492.34, 13.78, 10.18), "2020-03-31"),
    ("United_Kingdom", "UK", "GBR", 66647112, "Europe", (-132.79, 556.44, 21.37, 17.10), "2020-04-21"),
    ("United_States_of_America", "US", "USA", 329064917, "America", (-3413.23, 1535.40, -18.42, 30.79), "2020-04-18"),
    ("Brazil", "BR", "BRA", 211049519, "America", (-11.72, 1608.27, 75.27, 24.31), "2020-06-23"),
    ("India", "IN", "IND", 1366417756, "Asia", (-83.42, 1584.47, 91.08, 36.73), "2020-07-26"),
]
AFRICA = ((-128.87, 1988.38, 133.52, 55.61), "2020-09-13")
AFRICA_MEMBERS = [
    ("South_Africa", "ZA", "ZAF", 58558267, 0.35),
    ("Egypt", "EG", "EGY", 100388076, 0.15),
    ("Nigeria", "NG", "NGA", 200963603, 0.12),
    ("Algeria", "DZ", "DZA", 43053054, 0.08),
    ("Ghana", "GH", "GHA", 30417858, 0.09),
    ("Morocco", "MA", "MAR", 36471766, 0.07),
    ("Cameroon", "CM", "CMR", 25876387, 0.07),
    ("Sudan", "SD", "SDN", 42813237, 0.07),
]
# one reporting correction, as seen in the live feed
CORRECTION = ("ES", dt.date(2020, 5, 25), -372)

HEADER = [
    "dateRep", "day", "month", "year", "cases", "deaths", "countriesAndTerritories",
    "geoId", "countryterritoryCode", "popData2019", "continentExp",
    "Cumulative_number_for_14_days_of_COVID-19_cases_per_100000",
]


def sqrt_scale_inflection(phi):
    """Inflection of (phi1 + D s)^2 in closed form (larger root of the quadratic in s)."""
    phi1, phi2, phi3, phi4 = phi
    d = phi2 - phi1
    a, b = 3.0 * d, 2.0 * d - 2.0 * phi1
    s = (b + math.sqrt(b * b + 4.0 * a * phi1)) / (2.0 * a)
    return phi3 + phi4 * math.log(s / (1.0 - s))


def expected_cumulative(phi, infl_date, dates):
    phi1, phi2, phi3, phi4 = phi
    origin = dt.date.fromisoformat(infl_date) - dt.timedelta(days=round(sqrt_scale_inflection(phi)))
    t = np.array([(d - origin).days for d in dates], dtype=float)
    z = phi1 + (phi2 - phi1) / (1.0 + np.exp((phi3 - t) / phi4))
    return np.round(np.maximum(z, 0.0) ** 2)


def noisy_daily(rng, cumulative):
    mean = np.diff(cumulative, prepend=0.0)
    out = np.zeros(mean.size, dtype=np.int64)
    pos = mean > 0
    # NB with mean m and variance m + m^2/k
    out[pos] = rng.negative_binomial(DISPERSION, DISPERSION / (DISPERSION + mean[pos]))
    return out


def rows_for(name, geo, code, pop, continent, dates, daily):
    rate = []
    for i in range(len(dates)):
        if i < 13:
            rate.append("")
        else:
            rate.append(f"{daily[i - 13:i + 1].sum() / pop * 1e5:.8f}")
    for i in reversed(range(len(dates))):
        d = dates[i]
        yield [d.strftime("%d/%m/%Y"), d.day, d.month, d.year, int(daily[i]), 0,
               name, geo, code, pop, continent, rate[i]]


def main(out: Path):
    rng = np.random.default_rng(SEED)
    dates = [FIRST + dt.timedelta(days=i) for i in range((LAST - FIRST).days + 1)]
    table = []
    for name, geo, code, pop, continent, phi, infl in GROUPS:
        daily = noisy_daily(rng, expected_cumulative(phi, infl, dates))
        if geo == CORRECTION[0]:
            daily[dates.index(CORRECTION[1])] = CORRECTION[2]
        table.append((name, geo, code, pop, continent, daily))
    africa = noisy_daily(rng, expected_cumulative(*AFRICA, dates))
    shares = np.array([m[4] for m in AFRICA_MEMBERS])
    split = np.array([rng.multinomial(n, shares) for n in africa]).T
    for (name, geo, code, pop, _), daily in zip(AFRICA_MEMBERS, split):
        table.append((name, geo, code, pop, "Africa", daily))
    table.sort(key=lambda row: row[0])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for name, geo, code, pop, continent, daily in table:
            w.writerows(rows_for(name, geo, code, pop, continent, dates, daily))


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "sigfit" / "data" / "ecdc_fixture_2020-06-15.csv"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
