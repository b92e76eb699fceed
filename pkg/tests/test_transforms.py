import numpy as np
import pytest
import torch

from vdamp.transforms import (SubbandLayout, SubbandVector, WaveletCoeffs,
                              dwt_forward, dwt_inverse, fft2_unitary,
                              ifft2_unitary, subband_average, subband_expand)


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def centered_dft(x):
    h, w = x.shape
    spec = dft_matrix(h) @ x @ dft_matrix(w).T
    return np.roll(spec, (h // 2, w // 2), axis=(0, 1))


def rel_err(a, b):
    return float(torch.linalg.vector_norm(a - b) / torch.linalg.vector_norm(b))


def test_fft_of_zeros_is_zero():
    x = torch.zeros(4, 4, dtype=torch.complex128)
    assert torch.equal(fft2_unitary(x), x)


@pytest.mark.parametrize('shape', [(4, 4), (8, 16)])
def test_fft_of_constant_concentrates_at_centre(shape):
    h, w = shape
    c = 0.7 - 0.2j
    spec = fft2_unitary(torch.full(shape, c, dtype=torch.complex128))
    expected = torch.zeros(shape, dtype=torch.complex128)
    expected[h // 2, w // 2] = c * np.sqrt(h * w)
    assert torch.allclose(spec, expected, atol=1e-12)


def test_fft_matches_direct_dft(complex_image):
    x = complex_image(8)
    spec = fft2_unitary(x)
    assert rel_err(spec, torch.from_numpy(centered_dft(x.numpy()))) < 1e-12
    assert float(spec.norm()) == pytest.approx(float(x.norm()), rel=1e-12)


def test_ifft_inverts_fft(complex_image):
    for _ in range(100):
        x = complex_image(16)
        assert rel_err(ifft2_unitary(fft2_unitary(x)), x) < 1e-12


def test_ifft_of_centre_impulse_is_constant():
    spec = torch.zeros(8, 8, dtype=torch.complex128)
    spec[4, 4] = 8
    assert torch.allclose(ifft2_unitary(spec), torch.ones(8, 8, dtype=torch.complex128),
                          atol=1e-12)


def test_ifft_matches_direct_inverse(complex_image):
    spec = complex_image(8, 16)
    h, w = spec.shape
    unshifted = np.roll(spec.numpy(), (-(h // 2), -(w // 2)), axis=(0, 1))
    oracle = dft_matrix(h).conj().T @ unshifted @ dft_matrix(w).conj()
    assert rel_err(ifft2_unitary(spec), torch.from_numpy(oracle)) < 1e-10


def test_haar_2x2_algebra():
    a, b, c, d = 1.0, 2.0, 3.0 + 1j, -4.0
    w = dwt_forward(torch.tensor([[a, b], [c, d]], dtype=torch.complex128), 1)
    expected = torch.tensor([a + b + c + d, a + b - c - d, a - b + c - d, a - b - c + d],
                            dtype=torch.complex128) / 2
    assert torch.allclose(w.data, expected, atol=1e-15)


@pytest.mark.parametrize('scales', [1, 2, 4])
def test_constant_image_has_no_details(scales):
    w = dwt_forward(torch.full((16, 16), 3.0, dtype=torch.complex128), scales)
    assert torch.all(w.data[w.layout.offsets[1]:] == 0)


def test_haar_matrix_is_orthogonal():
    layout = SubbandLayout((8, 8), 2)
    columns = []
    for j in range(layout.numel):
        coeffs = WaveletCoeffs.zeros(layout)
        coeffs.data[j] = 1
        columns.append(dwt_inverse(coeffs).reshape(-1))
    synthesis = torch.stack(columns, dim=1)
    eye = torch.eye(layout.numel, dtype=torch.complex128)
    assert torch.allclose(synthesis.conj().T @ synthesis, eye, atol=1e-12)


def test_dwt_parseval(complex_image):
    x = complex_image(32)
    assert float(dwt_forward(x, 3).norm()) == pytest.approx(float(x.norm()), rel=1e-12)


def test_dwt_rejects_non_dyadic_axis():
    with pytest.raises(ValueError, match='height'):
        dwt_forward(torch.zeros(24, 32, dtype=torch.complex128), 4)
    with pytest.raises(ValueError, match='width'):
        dwt_forward(torch.zeros(32, 40, dtype=torch.complex128), 4)


def test_dwt_round_trip(complex_image):
    for _ in range(100):
        x = complex_image(64)
        assert rel_err(dwt_inverse(dwt_forward(x, 4)), x) < 1e-12


@pytest.mark.parametrize('scale', [1, 2, 3])
def test_diagonal_atom_shape(scale):
    layout = SubbandLayout((16, 16), 3)
    coeffs = WaveletCoeffs.zeros(layout)
    coeffs.data[layout.offsets[layout.index(scale, 'diag')]] = 1
    img = dwt_inverse(coeffs)
    support = torch.abs(img) > 0
    assert int(support.sum()) == 4 ** scale
    assert torch.allclose(torch.abs(img[support]),
                          torch.full((4 ** scale,), 2.0 ** -scale, dtype=torch.float64))
    rows, cols = torch.nonzero(support, as_tuple=True)
    assert int(rows.max() - rows.min()) + 1 == 2 ** scale
    assert int(cols.max() - cols.min()) + 1 == 2 ** scale


def test_dwt_inverse_is_isometry(complex_image):
    layout = SubbandLayout((32, 32), 3)
    w = WaveletCoeffs(complex_image(32).reshape(-1), layout)
    assert float(dwt_inverse(w).norm()) == pytest.approx(float(w.norm()), rel=1e-12)


def test_dwt_linearity(complex_image):
    x, y = complex_image(32), complex_image(32)
    a, b = 0.3 - 2j, 1.7
    lhs = dwt_forward(a * x + b * y, 3).data
    rhs = a * dwt_forward(x, 3).data + b * dwt_forward(y, 3).data
    assert rel_err(lhs, rhs) < 1e-12


@pytest.mark.parametrize('shape,scales', [((64, 64), 4), ((32, 64), 2), ((256, 256), 4)])
def test_subband_sizes(shape, scales):
    layout = SubbandLayout(shape, scales)
    n = shape[0] * shape[1]
    assert layout.n_subbands == 3 * scales + 1
    assert sum(layout.sizes) == n
    assert layout.sizes[0] == n // 4 ** scales
    for b in range(1, layout.n_subbands):
        assert layout.sizes[b] == n // 4 ** layout.scale_of(b)
    assert layout.offsets[-1] == n


def test_subband_labels():
    layout = SubbandLayout((256, 256), 4)
    assert layout.index(1, 'diag') == 12
    assert layout.index(2, 'horiz') == 7
    assert layout.index(4, 'vert') == 2
    assert layout.label(0) == 'approx'
    assert layout.label(12) == 'diag_s1'
    assert layout.label(7) == 'horiz_s2'
    with pytest.raises(ValueError):
        layout.index(5, 'diag')


def test_subband_block_matches_detail_shape():
    w = dwt_forward(torch.zeros(32, 64, dtype=torch.complex128), 2)
    assert tuple(w.block(w.layout.index(1, 'vert')).shape) == (16, 32)
    assert tuple(w.block(0).shape) == (8, 16)


def test_subband_average_of_ones():
    layout = SubbandLayout((16, 16), 2)
    avg = subband_average(torch.ones(layout.numel, dtype=torch.float64), layout)
    assert avg.tolist() == [1.0] * layout.n_subbands


def test_subband_average_of_indicator():
    layout = SubbandLayout((16, 16), 2)
    for b in range(layout.n_subbands):
        vec = torch.zeros(layout.numel, dtype=torch.float64)
        vec[layout.range(b)] = 1
        expected = [0.0] * layout.n_subbands
        expected[b] = 1.0
        assert subband_average(vec, layout).tolist() == expected


def test_subband_average_matches_naive_loop(rng):
    layout = SubbandLayout((32, 32), 3)
    vec = rng.integers(-64, 64, layout.numel) / 8
    avg = subband_average(torch.from_numpy(vec), layout).tolist()
    for b in range(layout.n_subbands):
        total = 0.0
        for j in range(layout.offsets[b], layout.offsets[b + 1]):
            total += vec[j]
        assert avg[b] == total / layout.sizes[b]


def test_subband_average_rejects_wrong_length():
    with pytest.raises(ValueError):
        subband_average(torch.ones(10), SubbandLayout((16, 16), 2))


def test_subband_expand():
    layout = SubbandLayout((16, 16), 2)
    zeros = SubbandVector.full(layout, 0.0)
    assert torch.all(subband_expand(zeros) == 0)
    assert torch.all(SubbandVector.full(layout, 2.5).expand() == 2.5)

    values = torch.tensor([0.5, 1.25, -3.0, 4.0, 0.0, 8.5, -0.75], dtype=torch.float64)
    sv = SubbandVector(layout, values)
    full = subband_expand(sv)
    assert full.numel() == layout.numel
    assert torch.equal(full[layout.range(3)], torch.full((layout.sizes[3],), 4.0,
                                                         dtype=torch.float64))
    assert torch.equal(subband_average(full, layout).values, values)
