"""Published MCC values and 95% CIs, transcribed verbatim from the original
study's result tables (internal adult test: P and F scenarios; external
tests for the pretrained-initialized F models). These are transcriptions,
not measurements; no value here is produced by this package.

Note the Ped-18 Cold-IF entry: its published interval has an upper bound
equal to the point estimate. It is kept as printed.
"""

# (label, mcc, (ci_lower, ci_upper))
INTERNAL_P = [
    ("Cold-RP", 0.6204, (0.6073, 0.6335)),
    ("Cold-IP", 0.6964, (0.6840, 0.7088)),
]

INTERNAL_F = [
    ("Cold-RF", 0.6650, (0.6523, 0.6777)),
    ("Cold-IF", 0.7187, (0.7066, 0.7308)),
    ("Warm-RF", 0.6267, (0.6137, 0.6397)),
    ("Warm-IF", 0.7258, (0.7138, 0.7378)),
    ("Shrink-RF", 0.6431, (0.6302, 0.6560)),
    ("Shrink-IF", 0.7150, (0.7028, 0.7272)),
]

# Pairs reported as significantly different (p < 0.00001).
INTERNAL_F_PAIRS = [("Cold-RF", "Cold-IF"), ("Warm-RF", "Warm-IF"), ("Shrink-RF", "Shrink-IF")]

EXTERNAL = {
    "Adult": [
        ("Cold-IF", 0.4378, (0.4226, 0.4530)),
        ("Warm-IF", 0.4180, (0.4029, 0.4331)),
        ("Shrink-IF", 0.4263, (0.4111, 0.4415)),
    ],
    "Ped-2": [
        ("Cold-IF", 0.1206, (0.1118, 0.1294)),
        ("Warm-IF", 0.0955, (0.0876, 0.1034)),
        ("Shrink-IF", 0.0936, (0.0858, 0.1014)),
    ],
    "Ped-11": [
        ("Cold-IF", 0.2458, (0.2340, 0.2576)),
        ("Warm-IF", 0.2595, (0.2475, 0.2715)),
        ("Shrink-IF", 0.2465, (0.2347, 0.2583)),
    ],
    "Ped-18": [
        ("Cold-IF", 0.4281, (0.4117, 0.4281)),
        ("Warm-IF", 0.4614, (0.4448, 0.4780)),
        ("Shrink-IF", 0.4293, (0.4129, 0.4457)),
    ],
}

# Reference outcomes recorded for comparison only.
ALPHA_1 = 0.7209
ALPHA_2 = 0.9
FUZZINESS = (1.113, 1.113, 1.039, 1.044)

# Published verdicts: "p < 0.00001" for internal pairs, "p > 0.05" within each external test.
INTERNAL_P_MAX = 0.00001
EXTERNAL_P_MIN = 0.05
