# Built-in generalized kernels, referenced by name from MODEL_CONFIG["table"].
# Each context record is {first_visit, in_cookie_set, outcomes: [{dz, p}]}.

def _law(*pairs):
  return [{"dz": list(dz), "p": p} for dz, p in pairs]

_nn_symmetric_2d = _law(((1, 0), 0.25), ((-1, 0), 0.25), ((0, 1), 0.25), ((0, -1), 0.25))

_knight_symmetric = _law(
  ((1, 0), 0.2), ((-1, 0), 0.2), ((0, 1), 0.2), ((0, -1), 0.2),
  ((2, 1), 0.1), ((-2, -1), 0.1),
)

_king_symmetric = _law(
  ((1, 0), 0.125), ((-1, 0), 0.125), ((0, 1), 0.125), ((0, -1), 0.125),
  ((1, 1), 0.125), ((-1, -1), 0.125), ((1, -1), 0.125), ((-1, 1), 0.125),
)

def _contexts(first_visit_law, other_law):
  return [
    {"first_visit": True, "in_cookie_set": True, "outcomes": first_visit_law},
    {"first_visit": False, "in_cookie_set": True, "outcomes": other_law},
    {"first_visit": True, "in_cookie_set": False, "outcomes": other_law},
    {"first_visit": False, "in_cookie_set": False, "outcomes": other_law},
  ]

knight_push = {
  "d": 2,
  "declared_K": 5 ** 0.5,
  "contexts": _contexts(
    _law(((2, 1), 0.2), ((2, -1), 0.2), ((-1, 0), 0.2), ((0, 1), 0.2), ((0, -1), 0.2)),
    _knight_symmetric,
  ),
}

diagonal_push = {
  "d": 2,
  "declared_K": 2 ** 0.5,
  "contexts": _contexts(
    _law(((1, 1), 0.3), ((1, -1), 0.3), ((-1, 1), 0.1), ((-1, -1), 0.1), ((0, 1), 0.1), ((0, -1), 0.1)),
    _king_symmetric,
  ),
}

# fixtures: deterministic walks used as controls
point_mass_e1 = {
  "d": 2,
  "declared_K": 1.0,
  "contexts": _contexts(_law(((1, 0), 1.0)), _law(((1, 0), 1.0))),
}

strip_oscillator = {
  "d": 2,
  "declared_K": 1.0,
  "contexts": _contexts(_nn_symmetric_2d, _nn_symmetric_2d),
  "site_overrides": [
    {"site": [0, 0], "outcomes": _law(((0, 1), 1.0))},
    {"site": [0, 1], "outcomes": _law(((0, -1), 1.0))},
  ],
}

kernel_tables = {
  "knight_push": knight_push,
  "diagonal_push": diagonal_push,
  "point_mass_e1": point_mass_e1,
  "strip_oscillator": strip_oscillator,
}
