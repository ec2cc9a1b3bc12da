import numpy as np
import pytest

from strandforge.fields import VectorField3D, build_visibility_index, field_laplacian
from strandforge.neural import LossWeights, grad_check, losses, nets
from strandforge.neural import tensor as T


def tiny_s2o_disc():
    spec = nets.build_s2o_discriminator(16, scale=0.125)
    params = {k: T.tensor(v.astype(np.float64), requires_grad=True)
              for k, v in nets.init_params(spec, seed=3).items()}
    return spec, params


def tiny_vol_disc(depth=8, res=8):
    spec = nets.build_vol_discriminator("o2v", res, depth, scale=0.125)
    params = {k: T.tensor(v.astype(np.float64), requires_grad=True)
              for k, v in nets.init_params(spec, seed=4).items()}
    return spec, params


def rand_t(rng, shape, grad=False):
    return T.tensor(rng.normal(size=shape), requires_grad=grad)


# --- closed forms ---------------------------------------------------------------

def test_content_zero_when_equal():
    spec, params = tiny_s2o_disc()
    rng = np.random.default_rng(0)
    img = rng.normal(size=(1, 2, 16, 16))
    cond = rand_t(rng, (1, 3, 16, 16))
    out = losses.loss_content(T.tensor(img), T.tensor(img.copy()), cond, spec, params)
    assert out.item() == 0.0


def test_content_layer0_closed_form():
    spec, params = tiny_s2o_disc()
    rng = np.random.default_rng(1)
    real = rng.normal(size=(1, 2, 16, 16))
    fake = real + 1.0  # all-ones difference
    cond = rand_t(rng, (1, 3, 16, 16))
    out = losses.loss_content(T.tensor(fake), T.tensor(real), cond, spec, params, layers=(0,))
    n = real.size
    assert np.isclose(out.item(), n / 2.0)


def test_style_zero_when_equal_and_gram_symmetry():
    spec, params = tiny_s2o_disc()
    rng = np.random.default_rng(2)
    img = rng.normal(size=(1, 2, 16, 16))
    cond = rand_t(rng, (1, 3, 16, 16))
    out = losses.loss_style(T.tensor(img), T.tensor(img.copy()), cond, spec, params)
    assert out.item() == 0.0
    feat = rand_t(rng, (3, 40))
    gram = losses._gram(feat).data
    assert np.array_equal(gram, gram.T)
    eig = np.linalg.eigvalsh(gram)
    assert eig.min() >= -1e-8


def test_gp_closed_form_linear_critic():
    # build a "critic" that is exactly linear with known gradient norm: use a
    # 1-layer linear spec via raw ops rather than the standard disc
    class LinearSpec:
        net_id = "lin"
        role = "discriminator"
        feature_taps = ()
        output = "score"

    def run_gp(gain, shape=(1, 2, 4, 4)):
        w = np.zeros(shape[1:], dtype=np.float64)
        w[0, 0, 0] = gain  # gradient w.r.t. input has norm |gain|
        class Spec(LinearSpec):
            pass

        # monkey spec: emulate disc_features via a tiny adapter
        def features(spec, params, image, cond):
            flat = T.reshape(image, (shape[0], int(np.prod(shape[1:]))))
            wt = T.constant(w.reshape(-1, 1))
            return [image], T.matmul(flat, wt)

        orig = losses.disc_features
        losses.disc_features = features
        try:
            real = np.ones(shape)
            fake = np.zeros(shape)
            gp = losses.loss_gp(Spec(), {}, real, fake, T.constant(np.zeros(shape)), eps=0.5)
        finally:
            losses.disc_features = orig
        return gp.item()

    assert np.isclose(run_gp(1.0), 0.0, atol=1e-12)
    assert np.isclose(run_gp(2.0), 1.0, atol=1e-12)
    assert np.isclose(10.0 * run_gp(2.0), 10.0, atol=1e-10)  # lambda-weighted term


def test_total_generator_loss_paper_weights():
    parts = {k: 1.0 for k in ("content", "style", "proj_dense", "proj_sketch", "laplacian")}
    assert np.isclose(losses.total_generator_loss("o2v", parts), 5.61002, atol=1e-12)
    parts["keep_invisible"] = 1.0
    assert np.isclose(losses.total_generator_loss("v2v", parts), 5.71002, atol=1e-12)
    s2o = {"content": 1.0, "style": 1.0}
    assert np.isclose(losses.total_generator_loss("s2o", s2o), 5.01, atol=1e-12)
    zero = {k: 0.0 for k in parts}
    assert losses.total_generator_loss("v2v", zero) == 0.0


def test_loss_weights_reject_negative():
    with pytest.raises(ValueError):
        LossWeights(gp_lambda=-1.0)


# --- projection and volume losses -------------------------------------------------

def make_field(rng, shape=(6, 6, 4)):
    data = rng.normal(size=shape + (3,))
    data[rng.random(shape) < 0.5] = 0.0
    return VectorField3D(data, (0, 0, 0), (1, 1, 1))


def test_loss_proj_zero_when_matching():
    rng = np.random.default_rng(5)
    f = make_field(rng)
    vis = build_visibility_index(f)
    from strandforge.fields import project_field

    proj = project_field(f, vis)
    vol = T.tensor(losses.field_to_vol(f)[None], requires_grad=True)
    out = losses.loss_proj(vol, [proj.data], [vis], f.shape)
    assert out.item() == 0.0


def test_loss_proj_single_pixel_unit_difference():
    data = np.zeros((2, 2, 2, 3))
    data[0, 0, 0] = (1.0, 0.0, 0.0)
    f = VectorField3D(data, (0, 0, 0), (1, 1, 1))
    vis = build_visibility_index(f)
    target = np.zeros((2, 2, 2))
    # pixel (row 1, col 0) sees cell (0,0,0); ask for (0,0) there -> diff (1,0)
    target[1, 0] = (0.0, 1e-12)  # tiny y keeps the pixel "valid"
    vol = T.tensor(losses.field_to_vol(f)[None])
    out = losses.loss_proj(vol, [target], [vis], f.shape)
    assert np.isclose(out.item(), 1.0, atol=1e-12)


def test_loss_proj_gradient_only_on_visible_cells():
    rng = np.random.default_rng(6)
    f = make_field(rng)
    vis = build_visibility_index(f)
    target = rng.normal(size=(f.ny, f.nx, 2))
    vol = T.tensor(losses.field_to_vol(f)[None], requires_grad=True)
    out = losses.loss_proj(vol, [target], [vis], f.shape)
    (g,) = T.grad_of(out, [vol])
    gflat = g.data.reshape(-1)
    idx, _ = losses.vis_tensor_indices(
        np.where(np.linalg.norm(target, axis=2) > 0, vis.cells, -1), f.shape, 0)
    allowed = np.zeros(g.data.size, dtype=bool)
    allowed[idx.reshape(-1)] = True
    assert np.all(gflat[~allowed] == 0.0)


def test_tensor_laplacian_matches_field_core():
    rng = np.random.default_rng(7)
    f = VectorField3D(rng.normal(size=(5, 4, 3, 3)), (0, 0, 0), (1, 1, 1))
    want = losses.field_to_vol(field_laplacian(f))
    got = losses.tensor_laplacian(T.tensor(losses.field_to_vol(f)[None])).data[0]
    assert np.allclose(got, want, atol=1e-12)


def test_loss_lap_zero_cases():
    rng = np.random.default_rng(8)
    f = rng.normal(size=(1, 3, 4, 4, 4))
    assert losses.loss_lap(T.tensor(f), T.tensor(f.copy())).item() == 0.0
    # constant offsets vanish under the Laplacian
    assert np.isclose(losses.loss_lap(T.tensor(f), T.tensor(f + 3.7)).item(), 0.0, atol=1e-18)


def test_loss_ori_zero_and_empty_gamma():
    rng = np.random.default_rng(9)
    f = make_field(rng)
    vol = losses.field_to_vol(f)[None]
    gamma = losses.invisible_tensor_indices(f, 0)
    t = T.tensor(vol.copy(), requires_grad=True)
    assert losses.loss_ori(t, T.tensor(vol), gamma).item() == 0.0
    assert losses.loss_ori(t, T.tensor(vol), np.zeros(0, dtype=np.int64)).item() == 0.0


def test_loss_ori_gradient_zero_outside_gamma():
    rng = np.random.default_rng(10)
    f = make_field(rng)
    vol = losses.field_to_vol(f)[None]
    gamma = losses.invisible_tensor_indices(f, 0)
    t = T.tensor(rng.normal(size=vol.shape), requires_grad=True)
    out = losses.loss_ori(t, T.tensor(vol), gamma)
    (g,) = T.grad_of(out, [t])
    mask = np.zeros(t.size, dtype=bool)
    mask[gamma] = True
    assert np.all(g.data.reshape(-1)[~mask] == 0.0)
    if gamma.size:
        assert np.any(g.data.reshape(-1)[mask] != 0.0)


# --- finite-difference gradient suite ------------------------------------------------

def s2o_gen_setup(rng):
    gen = nets.build_s2o_generator(16, scale=0.125)
    g_params = {k: T.tensor(v.astype(np.float64), requires_grad=True)
                for k, v in nets.init_params(gen, seed=0).items()}
    x = rng.normal(size=(1, 3, 16, 16))
    return gen, g_params, x


def test_fd_content_and_style_through_generator():
    rng = np.random.default_rng(11)
    gen, g_params, x = s2o_gen_setup(rng)
    disc, d_params = tiny_s2o_disc()
    real = rng.normal(size=(1, 2, 16, 16))
    cond = T.constant(x)

    def content_loss():
        out = nets.forward(gen, g_params, {"x": x})[gen.output]
        return losses.loss_content(out, T.constant(real), cond, disc, d_params)

    few = {k: v for k, v in list(g_params.items())[:4]}
    rep = grad_check(content_loss, few, "content", samples_per_tensor=4)
    assert rep.ok(1e-4), rep.per_tensor

    def style_loss():
        out = nets.forward(gen, g_params, {"x": x})[gen.output]
        return losses.loss_style(out, T.constant(real), cond, disc, d_params)

    rep = grad_check(style_loss, few, "style", samples_per_tensor=3)
    assert rep.ok(1e-4), rep.per_tensor


def test_fd_gradient_penalty_second_order():
    rng = np.random.default_rng(12)
    disc, d_params = tiny_s2o_disc()
    real = rng.normal(size=(1, 2, 16, 16))
    fake = rng.normal(size=(1, 2, 16, 16))
    cond = T.constant(rng.normal(size=(1, 3, 16, 16)))

    def gp():
        return losses.loss_gp(disc, d_params, real, fake, cond, eps=0.3)

    few = {k: v for k, v in list(d_params.items())[:4]}
    rep = grad_check(gp, few, "gp", samples_per_tensor=4)
    assert rep.ok(1e-3), rep.per_tensor


def test_fd_volume_losses_through_generator():
    rng = np.random.default_rng(13)
    gen = nets.build_o2v_generator(8, 8, scale=0.125)
    g_params = {k: T.tensor(v.astype(np.float64), requires_grad=True)
                for k, v in nets.init_params(gen, seed=1).items()}
    x = rng.normal(size=(1, 3, 8, 8))
    f = VectorField3D(rng.normal(size=(8, 8, 8, 3)), (0, 0, 0), (1, 1, 1))
    vis = build_visibility_index(f)
    target_map = rng.normal(size=(8, 8, 2))
    vol_t = losses.field_to_vol(f)[None]
    gamma = losses.invisible_tensor_indices(f, 0)

    def fwd():
        return nets.forward(gen, g_params, {"x2d": x})[gen.output]

    # probe output-side parameters: FD intervals there stay kink-free
    few = {k: g_params[k] for k in ("out.w", "out.b", "v.dec2.w")}
    rep = grad_check(lambda: losses.loss_proj(fwd(), [target_map], [vis], f.shape),
                     few, "proj", samples_per_tensor=4)
    assert rep.ok(1e-4), rep.per_tensor
    rep = grad_check(lambda: losses.loss_lap(fwd(), T.tensor(vol_t)),
                     few, "lap", samples_per_tensor=4)
    assert rep.ok(1e-4), rep.per_tensor
    rep = grad_check(lambda: losses.loss_ori(fwd(), T.tensor(vol_t), gamma),
                     few, "ori", samples_per_tensor=4)
    assert rep.ok(1e-4), rep.per_tensor


def test_gradcheck_quadratic_is_tight():
    x = T.tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    rep = grad_check(lambda: T.tsum(T.square(x)), {"x": x}, "quad", samples_per_tensor=3)
    assert rep.max_rel_err < 1e-8
