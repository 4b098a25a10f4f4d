# Generated once from numpy.random.default_rng(7): 256 (dx1, dy1, dx2, dy2) offsets,
# isotropic Gaussian (sigma = 31/5) rounded and restricted to the 31x31 patch.
# Kept as a literal table so descriptors do not depend on the RNG implementation.
BRIEF_PATTERN = (
    (0, 2, -2, -6), (-3, -6, 0, 8), (-3, -4, 3, 2), (1, -6, 0, 4),
    (-8, -3, -12, -8), (-11, -1, -8, 2), (0, 1, -9, -3), (-6, -5, 7, -5),
    (0, 5, -4, -1), (1, 0, -8, 0), (8, -10, 5, 1), (-4, 12, 5, -7),
    (0, 4, -1, 4), (0, 4, 9, -4), (1, -3, 1, -7), (-4, -1, 6, 7),
    (-8, -5, 4, -12), (-3, -1, 8, 4), (-2, -2, -2, 9), (-3, -2, 2, -1),
    (-1, -7, 0, -3), (7, 4, 0, 4), (-2, 7, 0, 4), (-8, 2, -10, -13),
    (-2, -6, 1, 14), (-5, -4, 1, 3), (-1, -1, 4, 3), (-6, 0, 0, -7),
    (2, -5, 6, 1), (1, -4, -1, -12), (-7, 2, -13, 5), (-11, 5, -5, 5),
    (1, -10, 8, 9), (0, -2, -1, -6), (7, -3, 0, -5), (-4, -8, 8, -1),
    (6, 0, -4, -2), (-3, 0, -2, -2), (-9, -5, 10, -4), (-7, 2, 9, -9),
    (-1, -4, -11, 5), (0, 0, -5, 3), (-3, -1, -7, -8), (8, -3, 2, 0),
    (-3, -3, 4, -2), (-1, 0, 7, 4), (2, -3, -9, 6), (6, -1, 3, 5),
    (5, 6, -3, 9), (-8, 5, 3, 5), (12, 9, -7, -10), (5, -6, 0, 5),
    (-10, -13, 2, 0), (-2, 0, -5, -9), (-1, -6, -10, 3), (0, 3, -6, -4),
    (-6, -5, 1, -5), (2, 2, 13, -9), (6, -1, 0, -9), (-3, 5, -1, 1),
    (-2, 7, 0, -14), (8, 0, -7, -6), (7, 1, 0, 0), (0, 5, 3, 1),
    (-6, 3, -4, 7), (-8, -1, 0, -8), (11, 9, -3, 5), (1, -7, -2, -1),
    (7, 2, 0, 9), (-3, -2, -11, 10), (6, 6, 4, 1), (1, -2, -1, 0),
    (9, 3, 0, -4), (-4, 10, 3, 0), (-2, -7, 0, 5), (-2, -1, -1, 1),
    (-10, -1, -5, 5), (-5, 4, 9, -2), (-4, 1, 0, -6), (3, 12, -2, -1),
    (-6, 2, -8, -7), (8, -6, 7, 9), (2, 3, 12, -1), (-4, -8, 0, 9),
    (6, -6, -5, -3), (2, -1, 1, 2), (-2, 0, 1, -1), (3, 12, 4, 0),
    (-10, 2, -12, -9), (5, 4, -1, -11), (-2, -4, 4, 14), (1, -5, -7, 0),
    (-1, -7, 1, -7), (7, 7, 7, -3), (3, -1, -2, -2), (-8, -9, 5, -1),
    (1, 6, -11, -5), (1, 2, -2, 6), (1, -8, -6, 5), (3, -12, 8, 4),
    (8, -2, -2, -7), (1, -10, -2, 6), (-8, 7, 2, -6), (-3, -3, 0, -3),
    (-5, -2, -6, -8), (0, 5, -9, 0), (-4, -6, 5, -3), (9, -5, 2, -1),
    (-5, 4, -1, 4), (0, -7, -1, 0), (6, -6, 0, -11), (4, -7, -11, 0),
    (7, -9, -7, -5), (-7, 2, -5, -4), (4, -5, 3, -6), (-8, -11, 12, -2),
    (2, 0, 1, 0), (12, -6, -10, -6), (-8, 5, 5, -6), (3, -7, 6, -7),
    (-2, -9, -6, 9), (5, -2, -5, -12), (-2, 0, -1, -1), (-7, 0, 0, 8),
    (12, -1, -5, 0), (-4, -5, 0, -6), (4, -1, 2, -1), (-5, -6, -1, -3),
    (1, 0, -8, 0), (-8, -4, -2, -13), (1, 1, -1, -3), (-2, -6, -2, -3),
    (1, -7, 1, 1), (-1, -3, 3, -10), (3, 2, 2, 2), (-4, -2, 4, 3),
    (1, -9, 3, 7), (6, 1, -10, 6), (-8, -4, 8, -2), (2, 11, 10, -1),
    (-1, -8, -4, 3), (2, 1, 6, -5), (0, 5, 4, 7), (2, -2, 2, -6),
    (-10, 4, 0, 2), (-11, -2, -4, -5), (-14, -2, 6, 2), (-1, 3, 4, 11),
    (7, 2, 2, 5), (-3, 0, 6, 12), (-1, 0, 1, 8), (0, 9, -6, -1),
    (-1, 5, 6, -9), (-6, 2, -4, -9), (6, 3, 3, -3), (6, -1, 7, -6),
    (-5, 1, -4, 4), (2, -6, 0, -2), (6, -4, -3, 8), (14, 12, 0, 1),
    (10, -1, -6, 1), (3, -5, -10, -9), (4, -5, -1, 1), (4, -2, 3, -6),
    (-2, -6, 7, 0), (-5, -2, -1, 4), (6, -1, 4, 13), (-1, -2, 8, 3),
    (4, -3, 12, 11), (4, 4, -13, 4), (-1, 3, 4, -2), (-10, 2, -5, -2),
    (-4, -2, -14, 8), (2, 7, 12, 0), (-11, -6, -7, -3), (0, -12, 2, -9),
    (2, -1, -2, 0), (-3, -4, -10, 0), (11, 12, 8, 4), (-4, 9, 0, 0),
    (-2, 1, -3, -1), (-7, -2, 14, 0), (-1, 3, 4, -7), (-1, 6, 2, 1),
    (10, -4, 1, -3), (9, -12, -4, -3), (4, 4, 9, -10), (5, -2, -4, 3),
    (-6, -13, -2, -9), (-4, 2, 2, 10), (-1, -10, -5, -6), (-8, 3, -4, -12),
    (4, -1, 2, 1), (4, 0, 8, 3), (2, 3, -9, -1), (-2, 1, -8, 10),
    (1, -8, -11, -2), (-1, -4, 1, -4), (3, -4, 0, 6), (5, -7, -3, 0),
    (-6, -6, -3, -13), (-9, -3, 1, -1), (-11, -3, 5, 3), (0, -6, 4, -4),
    (-7, -5, 9, 1), (7, -3, 6, -4), (-1, 15, 5, -3), (-1, 2, 8, -3),
    (-11, -2, 0, 1), (8, 2, 5, -7), (5, 13, 5, 2), (1, 11, -6, -1),
    (3, 5, -3, 2), (-2, 1, -1, -7), (0, 5, -6, -1), (4, -7, 1, -7),
    (7, 14, 13, -1), (5, 1, 1, 10), (-8, 7, 0, 9), (1, -4, 2, 5),
    (0, 3, -3, -13), (6, 4, 1, 0), (6, -3, -4, -1), (7, -9, 7, -4),
    (-7, 8, -1, -8), (-2, 6, 7, -3), (3, 4, -4, 2), (0, -3, -3, 0),
    (0, -4, -3, 7), (1, 5, 7, 4), (14, -5, 5, -2), (12, 11, -12, -6),
    (4, 5, 5, 0), (3, 4, 0, 6), (-14, 4, -6, 6), (-1, -6, 2, -6),
    (-6, -10, 0, 3), (6, -1, 6, 0), (-1, 4, 7, -2), (-2, -1, 1, -6),
    (6, -2, 3, -5), (2, 2, -3, 13), (2, 11, 6, -4), (-2, 3, 0, 0),
    (-2, -11, -1, -14), (2, -5, -4, -1), (2, -9, -11, -7), (-13, -6, 10, -7),
    (4, -9, 2, -2), (0, 4, 11, 1), (1, -6, 4, -2), (5, 0, 11, -12),
    (-2, 5, -2, -5), (-2, -9, 1, 15), (7, -7, -5, -3), (6, -5, -4, 5),
)
