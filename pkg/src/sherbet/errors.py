"""Exception hierarchy. Every error carries a short machine-readable ``kind``."""


class SherbetError(Exception):
    kind = "SherbetError"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


def _make(name, base=SherbetError, doc=None):
    cls = type(name, (base,), {"kind": name, "__doc__": doc})
    return cls


class OntologyError(SherbetError):
    kind = "OntologyError"


CycleDetected = _make("CycleDetected", OntologyError)
MultipleRoots = _make("MultipleRoots", OntologyError)
OrphanNode = _make("OrphanNode", OntologyError)
MultipleParents = _make("MultipleParents", OntologyError)
LevelOutOfRange = _make("LevelOutOfRange", OntologyError)

PointOutsideBall = _make("PointOutsideBall")
EmptyEdgeSet = _make("EmptyEdgeSet")
NonFiniteLoss = _make("NonFiniteLoss")
ShapeMismatch = _make("ShapeMismatch")
EmptyAdmission = _make("EmptyAdmission")
UnknownCode = _make("UnknownCode")
UnknownCodeInStrictMode = _make("UnknownCodeInStrictMode", UnknownCode)
SchemaError = _make("SchemaError")
InsufficientPatients = _make("InsufficientPatients")
ConfigError = _make("ConfigError")
SingleAdmissionPatientInFineTune = _make("SingleAdmissionPatientInFineTune")
EmptyTruth = _make("EmptyTruth")
AllZeroSupport = _make("AllZeroSupport")
SingleClass = _make("SingleClass")
HeadMissing = _make("HeadMissing")
MissingArtifact = _make("MissingArtifact")
