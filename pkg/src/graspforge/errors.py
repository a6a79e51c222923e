"""Exception types shared across the package.

Every failure mode that callers are expected to handle has its own class so
tests and CLI error paths can match on type rather than message text.
"""


class GraspForgeError(Exception):
    """Base class for all package-specific errors."""


# --- camera geometry ---

class DegenerateFrame(GraspForgeError):
    """look_at cannot build a frame (zero baseline or up parallel to view)."""


class InvalidCount(GraspForgeError):
    """A requested count (views, samples) is zero or negative."""


class BehindCamera(GraspForgeError):
    """Point lies at or behind the camera plane (camera-frame z <= 0)."""


class NonPositiveDepth(GraspForgeError):
    """Unprojection requested at depth <= 0."""


# --- meshes and rendering ---

class EmptyMesh(GraspForgeError):
    """Operation requires a mesh with at least one triangle."""


class NearClipViolation(GraspForgeError):
    """A surface hit landed closer than the camera's z_near."""


class MissingColors(GraspForgeError):
    """RGB rendering requires per-vertex colors."""


class DepthOutOfRange(GraspForgeError):
    """Valid depth values fall outside [z_near, z_far] during quantization."""


class ChannelMismatch(GraspForgeError):
    """Predicted-depth channels are not bitwise identical."""


class ParseError(GraspForgeError):
    """A file (OBJ, manifest, camera JSON, config) failed to parse."""


# --- shared shape checks ---

class DimensionMismatch(GraspForgeError):
    """Image/mask/grid dimensions do not agree with the camera or each other."""


class EmptyInput(GraspForgeError):
    """An operation over collections received an empty list."""


# --- grasping ---

class NonUnitInput(GraspForgeError):
    """A direction argument was not unit-norm within tolerance."""


class EmptyPool(GraspForgeError):
    """CEM refinement requires a non-empty candidate pool."""


class DegenerateProjection(GraspForgeError):
    """Grasp axis is parallel to the table normal; in-plane angle undefined."""


# --- datasets ---

class InsufficientViews(GraspForgeError):
    """Fewer views available than requested."""
