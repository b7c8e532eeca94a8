"""Exception hierarchy shared by every subsystem."""


class DroneMacError(Exception):
    """Base class for all errors raised by this package."""


class UnknownNode(DroneMacError, KeyError):
    def __init__(self, node):
        super().__init__(node)
        self.node = node

    def __str__(self):
        return f"unknown node {self.node!r}"


# middleware
class BadCertificate(DroneMacError):
    pass


class DigestMismatch(DroneMacError):
    pass


class ManifestDenied(DroneMacError):
    pass


class NotAdvertised(DroneMacError):
    pass


class NotRunning(DroneMacError):
    pass


class NotTrusted(DroneMacError):
    pass


class EdgeNotPermitted(DroneMacError):
    pass


# refmon
class PermissionDenied(DroneMacError):
    """A connection-oriented operation was refused by the reference monitor."""

    def __init__(self, verdict):
        super().__init__(f"{verdict.hook}: {verdict.src} -> {verdict.dst} denied")
        self.verdict = verdict


class NoSuchFile(DroneMacError, FileNotFoundError):
    pass


class InvalidGraph(DroneMacError):
    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = list(violations)


# policy
class PolicySyntaxError(DroneMacError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class PolicyUndeclaredNode(PolicySyntaxError):
    def __init__(self, line: int, node: str):
        super().__init__(line, f"undeclared node {node!r}")
        self.node = node


class UnresolvedTrustedApp(DroneMacError):
    pass


class UnresolvedApp(DroneMacError):
    def __init__(self, name):
        super().__init__(f"no running process for application {name!r}")
        self.name = name


class AuditParseError(DroneMacError):
    def __init__(self, line: int, message: str):
        super().__init__(f"audit line {line}: {message}")
        self.line = line


# attest
class AlreadyMeasured(DroneMacError):
    pass


class NotBooted(DroneMacError):
    pass


class EncodingError(DroneMacError, ValueError):
    pass


# airspace
class InvalidPolygon(DroneMacError, ValueError):
    pass


class UnknownDrone(DroneMacError):
    pass


class NoArtifact(DroneMacError):
    pass


class SignatureInvalid(DroneMacError):
    pass


# harness
class UnknownScenario(DroneMacError, KeyError):
    def __str__(self):
        return f"unknown scenario {self.args[0]!r}"
