import numpy as np
import pytest

from core import corpus
from core.errors import FunctionError
from core.funcspace import PiecewiseFunc

BUILTINS = ["const1", "bump", "cusp05", "cusp025", "step", "smoothstep_0.125", "sawtooth_3", "randspline_6", "logsing"]


@pytest.mark.parametrize("fn_id", BUILTINS)
def test_every_builtin_resolves(small, fn_id):
    f = corpus.resolve(fn_id, small, seed=3)
    values = f(np.linspace(-1.0, 2.0, 301))
    assert np.all(np.isfinite(values))


@pytest.mark.parametrize("fn_id", ["bump", "cusp05", "cusp025", "step", "sawtooth_3", "randspline_6", "logsing"])
def test_unit_supported_entries_vanish_outside(small, fn_id):
    f = corpus.resolve(fn_id, small, seed=3)
    assert f.support == corpus.UNIT
    assert f.check_support(small.window)


def test_unknown_id_lists_available(small):
    with pytest.raises(FunctionError, match="available: const1"):
        corpus.resolve("wiggle", small)


def test_names_and_parameters(small):
    assert corpus.resolve("cusp05", small).name == "cusp05"
    assert corpus.resolve("smoothstep_0.0625", small).name == "smoothstep_0.0625"
    assert corpus.resolve("sawtooth", small).name == "sawtooth_3"
    assert corpus.entry("sawtooth_5").alpha == 1.0
    assert corpus.entry("step").alpha is None


def test_sawtooth_teeth():
    f = corpus.sawtooth(2)
    assert f(np.array([0.0, 0.125, 0.25, 0.375]))== pytest.approx([0.0, 1.0, 0.0, 1.0])


def test_smoothstep_ramps():
    f = corpus.smoothstep(0.25)
    assert f(np.array([-0.3, -0.125, 0.5, 1.125, 1.3])) == pytest.approx([0.0, 0.5, 1.0, 0.5, 0.0])
    with pytest.raises(FunctionError):
        corpus.smoothstep(0.0)


def test_logsing_is_zero_at_singularity():
    assert corpus.logsing()(np.array([0.5]))[0] == 0.0


def test_randspline_is_seeded(small):
    a = corpus.resolve("randspline_5", small, seed=1)
    b = corpus.resolve("randspline_5", small, seed=1)
    c = corpus.resolve("randspline_5", small, seed=2)
    x = np.linspace(0.0, 1.0, 101)
    assert isinstance(a, PiecewiseFunc)
    assert np.array_equal(a(x), b(x))
    assert not np.array_equal(a(x), c(x))


def test_csv_path(small, tmp_path):
    path = tmp_path / "tri.csv"
    path.write_text("x,value\n0,0\n0.5,2\n1,0\n")
    f = corpus.resolve(str(path), small)
    assert f(np.array([0.25]))[0] == pytest.approx(1.0)
