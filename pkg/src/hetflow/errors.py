"""Exception types shared across the toolkit."""


class HetflowError(Exception):
    """Base class for all toolkit errors."""


# --- trajectory ingestion / kinematics ---

class MalformedRow(HetflowError):
    """A data row holds a non-numeric value in a numeric column."""


class NonMonotoneTime(HetflowError):
    """Duplicate or decreasing timestamps within one vehicle's samples."""


class EmptyDataset(HetflowError):
    """No trajectories found in the source."""


class TooShort(HetflowError):
    """Trajectory or segment has too few samples for the requested derivation."""


# --- microscopic simulation ---

class InfeasibleScenario(HetflowError):
    """Ring scenario cannot be realized (non-positive equilibrium or initial gap)."""


class BlowUp(HetflowError):
    """Simulation became unstable (runaway speed or collision)."""


# --- car-following calibration ---

class DegenerateTrajectory(HetflowError):
    """Observed follower never moves; speed-weighted objective is undefined."""


# --- jerk-attribute extraction ---

class DegenerateRegression(HetflowError):
    """All regressor values identical; least-squares slope is undefined."""


class NoValidSegments(HetflowError):
    """Every segment fell below the jerk-magnitude threshold."""


class ZeroMeanAttribute(HetflowError):
    """Attribute series has zero mean; constancy error is undefined."""


# --- gridding and attribute reconstruction ---

class GridMismatch(HetflowError):
    """Dataset support lies outside the requested grid."""


class MissingProfile(HetflowError):
    """A cell member has no driver profile (strict mode)."""


class ZeroDensity(HetflowError):
    """Occupied cell reports zero density; desired-speed gap proxy undefined."""


# --- neural engine / fundamental diagram ---

class DimensionMismatch(HetflowError):
    """Input vector length does not match the network's input dimension."""


class NonFiniteLoss(HetflowError):
    """Training loss became NaN or infinite."""


class InsufficientData(HetflowError):
    """Too few samples to fit the requested model."""


class EmptyCells(HetflowError):
    """A target cell has no feature vectors."""


class TooFewSamples(HetflowError):
    """In-cell trajectory slice too short for feature statistics."""


# --- PDE integration ---

class CflViolation(HetflowError):
    """Requested time step exceeds the CFL stability bound."""


class EmptyInitialCondition(HetflowError):
    """Initial field has insufficient occupied-cell coverage."""


# --- pipeline / experiments ---

class StageFailure(HetflowError):
    """A pipeline stage failed; message names the stage."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")


class EmptySplit(HetflowError):
    """An experiment condition produced no test cells."""


class IoFailure(HetflowError):
    """Report or artifact could not be written."""
