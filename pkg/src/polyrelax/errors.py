"""Exception types raised across the package."""


class PolyrelaxError(Exception):
    """Base class for all package errors."""


class UnboundedPolytope(PolyrelaxError):
    pass


class OriginNotInterior(PolyrelaxError):
    pass


class DegenerateRay(PolyrelaxError):
    """Ray shooting found no crossing; the ray classification was inconsistent."""


class EmptyInput(PolyrelaxError):
    pass


class StableNeuron(PolyrelaxError):
    """A piecewise-linear neuron whose input interval lies in one linear region."""


class UnsupportedLayer(PolyrelaxError):
    pass


class ParseError(PolyrelaxError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ShapeError(PolyrelaxError):
    pass


class BackendUnavailable(PolyrelaxError):
    pass
