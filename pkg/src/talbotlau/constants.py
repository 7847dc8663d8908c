"""Physical constants (CODATA 2018) in the unit system used throughout.

Lengths are µm/mm/pm depending on the natural scale of each quantity,
energies are keV. Keeping hc in keV·pm makes the wavelength formulas
one-liners without unit gymnastics.
"""

# Planck constant times speed of light, keV·pm (exact h and c, CODATA 2018)
HC_KEV_PM = 1239.8419843320026

# Electron (= positron) rest energy, keV
ELECTRON_REST_ENERGY_KEV = 510.99895069

# Unit conversions
PM_PER_UM = 1.0e6
UM_PER_MM = 1.0e3
MM_PER_M = 1.0e3
