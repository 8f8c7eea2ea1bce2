import math


class Emojis:
    # Status
    CHECK = "✅"
    WARN = "⚠️"
    FAIL = "❌"

    # Pipeline stages
    GRAMMAR = "📐"
    LEARN = "📚"
    DICE = "🎲"
    BUILD = "🏗️"
    CAMERA = "📷"
    DISK = "💾"
    CHART = "📊"
    ROCKET = "🚀"
    SEARCH = "🔍"


# Energy
DENSITY_FLOOR = 1e-12           # KDE / probability floor inside -ln(.)
PROB_TOL_EXACT = 1e-9           # stored as-is
PROB_TOL_RENORM = 1e-3          # renormalized (warn above 1e-6), rejected beyond

# Size models
BANDWIDTH_FLOOR = 1e-4          # m
SIZE_CLAMP = 1e-3               # m, after exhausted rejection retries
SIZE_MAX_RETRIES = 100

# Scene / geometry tolerances
SUPPORT_TOL = 0.01              # m, floating / penetration validator
ROOM_TOL = 0.01                 # m, room containment validator
SNAP_RESIDUAL = 0.001           # m, resolve_vertical residual check
TIE_EPS = 1e-9                  # ray hit tie window

NIL = "nil"
TWO_PI = 2.0 * math.pi

# Relation statistic keys
WALL_KEY = "wall"
SHELL_LABELS = ("floor", "ceiling", "wall")

LAYOUT_VERSION = 1
BUNDLE_VERSION = 1
