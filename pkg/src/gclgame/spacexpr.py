"""
Search-space expressions, e.g.

    nlays:int[1,4] drop:real[0,0.8] alpha_w:log[1e-7,1e-1]

Each dimension is `name:kind[low,high]` with kind one of int, real, log.
"""
import pyparsing as _pp

from .errors import InvalidConfig

_name = _pp.Word(_pp.alphas + "_", _pp.alphanums + "_")
_kind = _pp.oneOf("int real log")
_number = _pp.pyparsing_common.number
_bounds = _pp.Suppress("[") + _number + _pp.Suppress(",") + _number + _pp.Suppress("]")
_dimension = _pp.Group(_name + _pp.Suppress(":") + _kind + _bounds)
_expr = _pp.OneOrMore(_dimension + _pp.Optional(_pp.Suppress(",")))


def parse(expr):
    """List of (name, kind, low, high) in the order written."""
    try:
        parsed = _expr.parseString(expr, parseAll=True).asList()
    except _pp.ParseException as e:
        raise InvalidConfig('space', "cannot parse at \"@@@\": {}".format(e.markInputline("@@@"))) from e

    return [(name, kind, low, high) for name, kind, low, high in parsed]


def format_space(dims):
    return " ".join("{}:{}[{!r},{!r}]".format(name, kind, low, high) for name, kind, low, high in dims)
