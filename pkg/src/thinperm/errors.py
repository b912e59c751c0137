"""Exception types shared across the toolkit."""


class ThinPermError(Exception):
    """Base class for all toolkit errors."""


class MeshingFailed(ThinPermError):
    """Geometry cannot be meshed (degenerate or inadmissible input)."""


class TagAmbiguity(MeshingFailed):
    """A boundary edge matches no tag within tolerance."""


class EmptyGammaD(ThinPermError):
    """Operation requires a nonempty interior (solid) boundary."""


class InconsistentMesh(ThinPermError):
    """Discretization and problem data refer to different meshes."""


class SingularSystem(ThinPermError):
    """Saddle system is structurally singular.

    Carries the near-null velocity field (full nodal layout) when it could
    be recovered, so callers can inspect surviving rigid motions.
    """

    def __init__(self, message, near_null=None):
        super().__init__(message)
        self.near_null = near_null


class RegimeMismatch(ThinPermError):
    """Requested operation is inconsistent with the parameter regime."""


class DegenerateTensor(ThinPermError):
    """Effective tensor block is not positive definite beyond tolerance."""


class MeanNotZero(ThinPermError):
    """Divergence data for a zero-boundary problem has nonzero mean."""


class BogovskiiFailure(ThinPermError):
    """Discrete divergence problem is inconsistent (flux bookkeeping bug)."""


class ConfigInvalid(ThinPermError):
    """Run configuration violates the published schema."""


class ComputeFailed(ThinPermError):
    """A solver failed while executing a configured run."""
