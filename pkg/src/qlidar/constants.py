"""Shared physical constants and unit conventions.

All internal quantities use a fixed unit system chosen so that typical
magnitudes stay near unity:

* time            picoseconds (ps)
* angular freq    rad/ps  (equivalently THz * 2*pi)
* dispersion      ps^2 (group-delay dispersion), ps/(nm*km) for fiber specs
* length          km for fiber, cm for target depth
* rates           counts per second (Hz), durations in seconds
* wavelength      nm

Conversions between these units happen at module boundaries (CLI, file
formats), never inside the numerics.
"""

from __future__ import annotations

import math

# Vacuum speed of light in the unit systems used internally.
SPEED_OF_LIGHT_NM_PER_PS = 2.99792458e5
SPEED_OF_LIGHT_CM_PER_PS = 2.99792458e-2

# FWHM of a Gaussian divided by its standard deviation: sqrt(8 ln 2).
FWHM_PER_SIGMA = math.sqrt(8.0 * math.log(2.0))

PICOSECONDS_PER_SECOND = 1.0e12
PICOSECONDS_PER_NANOSECOND = 1.0e3
