import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlpf.models import builtin_model
from mlpf.observations import (
    FrequencyExceededError,
    ObservationPath,
    PathFormatError,
    export_csv,
    increments_at_level,
    read_path,
    simulate_observations,
    write_path,
)

OU = builtin_model("ou", {})


def left_to_right_sum(block):
    acc = block[0].copy()
    for v in block[1:]:
        acc = acc + v
    return acc


def test_pbar_increment_moments():
    path = simulate_observations("pbar", OU, 4, 8, seed=123)
    delta = 2.0 ** -8
    inc = path.increments[:, 0]
    n = inc.size
    se_mean = np.sqrt(delta / n)
    assert abs(inc.mean()) < 5 * se_mean
    se_var = delta * np.sqrt(2.0 / n)
    assert abs(inc.var() - delta) < 5 * se_var


def test_p_mode_with_zero_h_matches_pbar():
    silent = builtin_model("ou", {})
    silent = type(silent)(
        name="silent", d_x=1, d_y=1, drift=silent.drift, diffusion=silent.diffusion,
        observation=lambda x: np.zeros_like(x), x_star=silent.x_star,
    )
    a = simulate_observations("pbar", silent, 2, 4, seed=99)
    b = simulate_observations("p", silent, 2, 4, seed=99)
    assert np.array_equal(a.increments, b.increments)


def test_p_mode_retains_latent_path():
    path = simulate_observations("p", OU, 2, 5, seed=5)
    assert path.latent is not None
    assert path.latent.shape == (2 * 32 + 1, 1)
    assert path.latent[0, 0] == 0.0


def test_level0_view_is_total_sum():
    path = simulate_observations("pbar", OU, 1, 3, seed=17)
    total = increments_at_level(path, 0, 0)
    assert total.shape == (1, 1)
    assert total[0, 0] == left_to_right_sum(path.increments)[0]


def test_identity_view_at_l_data():
    path = simulate_observations("pbar", OU, 2, 4, seed=3)
    view = increments_at_level(path, 4, 1)
    assert np.array_equal(view, path.increments[16:32])


def test_pairwise_sums_explicit():
    inc = np.array([[1.0], [2.0], [3.0], [4.0]])
    path = ObservationPath(1, 2, 1, inc, "pbar", 0)
    lvl1 = increments_at_level(path, 1, 0)
    assert np.array_equal(lvl1, np.array([[3.0], [7.0]]))


def test_level_overflow_rejected():
    path = simulate_observations("pbar", OU, 1, 3, seed=1)
    with pytest.raises(FrequencyExceededError):
        increments_at_level(path, 4, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_coarsening_exact_at_every_level(T, L_data, seed):
    path = simulate_observations("pbar", OU, T, L_data, seed=seed)
    per_unit = 1 << L_data
    for l in range(L_data + 1):
        children = 1 << (L_data - l)
        for p in range(T):
            view = increments_at_level(path, l, p)
            block = path.increments[p * per_unit : (p + 1) * per_unit]
            for k in range(1 << l):
                expect = left_to_right_sum(block[k * children : (k + 1) * children])
                assert view[k, 0] == expect[0]  # bit-exact


def test_fixed_seed_reproducible():
    a = simulate_observations("pbar", OU, 2, 6, seed=777)
    b = simulate_observations("pbar", OU, 2, 6, seed=777)
    assert np.array_equal(a.increments, b.increments)


def test_roundtrip_io(tmp_path):
    path = simulate_observations("pbar", OU, 3, 4, seed=11)
    f = tmp_path / "obs.bin"
    write_path(path, f)
    back = read_path(f)
    assert back.T == path.T and back.L_data == path.L_data and back.d_y == path.d_y
    assert back.mode == path.mode and back.seed == path.seed
    assert np.array_equal(back.increments, path.increments)


def test_truncated_file_rejected(tmp_path):
    path = simulate_observations("pbar", OU, 1, 2, seed=1)
    f = tmp_path / "obs.bin"
    write_path(path, f)
    data = f.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(data[:-8])
    with pytest.raises(PathFormatError):
        read_path(tmp_path / "trunc.bin")


def test_length_mismatch_rejected():
    good = io.BytesIO()
    inc = np.arange(4.0).reshape(4, 1)
    write_path(ObservationPath(2, 1, 1, inc, "pbar", 0), good)
    assert read_path(io.BytesIO(good.getvalue())).increments.shape == (4, 1)
    extra = good.getvalue() + np.float64(9.0).tobytes()
    with pytest.raises(PathFormatError):
        read_path(io.BytesIO(extra))


def test_bad_magic_rejected():
    with pytest.raises(PathFormatError):
        read_path(io.BytesIO(b"NOTMAGIC" + b"\x00" * 40))


def test_csv_export(tmp_path):
    path = simulate_observations("pbar", OU, 1, 2, seed=4)
    f = tmp_path / "obs.csv"
    export_csv(path, f)
    lines = f.read_text().strip().splitlines()
    assert lines[0] == "k,component,value"
    assert len(lines) == 1 + 4
    assert float(lines[1].split(",")[2]) == path.increments[0, 0]


def test_invalid_dimensions():
    with pytest.raises(ValueError):
        simulate_observations("pbar", OU, 0, 3, seed=0)
    with pytest.raises(ValueError):
        ObservationPath(1, 2, 1, np.zeros((3, 1)), "pbar", 0)
