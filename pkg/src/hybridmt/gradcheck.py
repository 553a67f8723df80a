"""Gradient self-checks: per-op finite differences and the full hybrid loss.

The tiny hybrid model built here keeps n_rec larger than the total candidate
pool so the recommendation set is independent of parameter perturbations;
the loss is then smooth at generic points and central differences are valid.
"""

import numpy as np

from . import fusion, nmt, smt as smt_mod, tensor as T, training
from .corpus import Batch, Vocabulary, gen_synthetic
from .rng import Rng
from .smt import SmtRecommender
from .tensor import finite_diff_check


def _rand(rng, shape):
    return rng.uniform_array(shape, -1.0, 1.0)


def _scalarize(out, rng):
    """Project an op output to a scalar with a fixed random functional."""
    c = T.constant(_rand(rng, out.data.shape))
    return T.sum_all(T.mul(out, c))


def op_checks(seed=0, h=1e-5, tol=1e-4):
    """Finite-difference every differentiable op on random small shapes.

    Yields (op name, GradCheckReport).
    """
    rng = Rng(seed).derive("opcheck")
    n, a, b = 3 + rng.randint(3), 2 + rng.randint(4), 2 + rng.randint(4)

    def params(**shapes):
        return {k: T.parameter(_rand(rng, s), name=k) for k, s in shapes.items()}

    cases = []

    p = params(x=(n, a), w=(a, b), bias=(b,))
    cases.append(("affine", p, lambda: _scalarize(T.affine(p["x"], p["w"], p["bias"]), rng)))

    p2 = params(x=(n, a), w=(a, b))
    cases.append(("matmul", p2, lambda: _scalarize(T.matmul(p2["x"], p2["w"]), rng)))

    for kind in ("sigmoid", "tanh"):
        pk = params(x=(n, a))
        cases.append(
            (kind, pk, lambda pk=pk, kind=kind: _scalarize(T.pointwise(kind, pk["x"]), rng))
        )

    for kind in ("add", "sub", "mul"):
        pk = params(x=(n, a), y=(n, a))
        cases.append(
            (kind, pk,
             lambda pk=pk, kind=kind: _scalarize(T.pointwise(kind, pk["x"], pk["y"]), rng))
        )

    pb = params(x=(n, 1), y=(n, a))
    cases.append(("mul_broadcast", pb, lambda: _scalarize(T.mul(pb["x"], pb["y"]), rng)))

    ps = params(x=(n, a))
    cases.append(("softmax_rows", ps, lambda: _scalarize(T.softmax_rows(ps["x"]), rng)))

    pm = params(x=(n, 4))
    mask = np.array([[1, 1, 0, 1]] * n, dtype=np.float64)
    cases.append(
        ("softmax_rows_masked", pm,
         lambda: _scalarize(T.softmax_rows(pm["x"], mask=mask), rng))
    )

    pc = params(x=(n, a), y=(n, b))
    cases.append(("concat_cols", pc, lambda: _scalarize(T.concat_cols([pc["x"], pc["y"]]), rng)))

    pl = params(table=(5, a))
    ids = np.array([rng.randint(5) for _ in range(n)])
    cases.append(("lookup_rows", pl, lambda: _scalarize(T.lookup_rows(pl["table"], ids), rng)))

    pu = params(x=(n, a))
    cases.append(("sum_all", pu, lambda: T.sum_all(pu["x"])))

    psc = params(x=(n, a))
    cases.append(("scale", psc, lambda: T.sum_all(T.scale(psc["x"], 0.37))))

    plg = {"x": T.parameter(rng.uniform_array((n, a), 0.2, 2.0), name="x")}
    cases.append(("log", plg, lambda: _scalarize(T.log(plg["x"]), rng)))

    pp = params(x=(n, a))
    pick_ids = np.array([rng.randint(a) for _ in range(n)])
    cases.append(("pick_cols", pp, lambda: _scalarize(T.pick_cols(pp["x"], pick_ids), rng)))

    psa = params(vals=(n, 3))
    scat_ids = np.array([[rng.randint(6) for _ in range(3)] for _ in range(n)])
    cases.append(
        ("scatter_cols", psa,
         lambda: _scalarize(T.scatter_cols(psa["vals"], scat_ids, 6), rng))
    )

    for name, p_dict, f in cases:
        yield name, finite_diff_check(f, p_dict, h=h, tol=tol)


def build_tiny_hybrid(seed, n_sentences=2):
    """A complete hybrid setup at tiny dims on a lexicon_rare micro-corpus.

    Returns (batch, nmt params, advisor params, smt model, target vocab).
    """
    corpus = gen_synthetic("lexicon_rare", 30, seed=seed, n_types=10,
                           min_len=2, max_len=4)
    src_vocab = Vocabulary.build(corpus.sources(), cap=14)
    tgt_vocab = Vocabulary.build(corpus.targets(), cap=12)  # rare type drops out
    smt = SmtRecommender(n_tm=3, n_rec=50, em_iters=3)
    smt.fit(corpus.sources(), corpus.targets(), target_vocab=tgt_vocab)
    rng = Rng(seed).derive("tiny-init")
    params = nmt.NmtParams(len(src_vocab), len(tgt_vocab), embed_dim=4,
                           hidden_dim=6, attn_dim=5, readout_dim=4, rng=rng)
    advisor = fusion.AdvisorParams(4, 6, (8, 4), (7, 3), rng)
    batch = Batch(corpus.pairs[:n_sentences], src_vocab, tgt_vocab)
    return batch, params, advisor, smt, tgt_vocab


def hybrid_loss_check(seed, h=1e-5, tol=1e-4, max_coords=4):
    """Finite-difference the complete hybrid loss at tiny dims."""
    batch, params, advisor, smt, tgt_vocab = build_tiny_hybrid(seed)
    tensors = dict(params.tensors())
    tensors.update(advisor.tensors())

    def f():
        loss, _ = training.nll_loss(batch, params, advisor, smt, tgt_vocab)
        return loss

    return finite_diff_check(f, tensors, h=h, tol=tol, max_coords=max_coords,
                             rng=Rng(seed).derive("coords"))


def selftest_report(op_seeds=3, model_seeds=3, log=print):
    """Run the whole check suite; returns True when everything passes."""
    ok = True
    for seed in range(op_seeds):
        for name, report in op_checks(seed=seed):
            status = "pass" if report.passed else "FAIL"
            if not report.passed or seed == 0:
                log(f"  op {name:<22} seed {seed}: {status} "
                    f"(max rel err {report.max_rel_err:.2e})")
            ok &= report.passed
    for seed in range(model_seeds):
        report = hybrid_loss_check(seed=seed)
        status = "pass" if report.passed else "FAIL"
        log(f"  hybrid loss gradcheck seed {seed}: {status} ({report.n_checked} coords, "
            f"max rel err {report.max_rel_err:.2e})")
        ok &= report.passed
    rng = Rng(0).derive("selftest-softmax")
    x = T.constant(rng.uniform_array((20, 7), -50.0, 50.0))
    rows = T.softmax_rows(x).data.sum(axis=1)
    softmax_ok = bool(np.all(np.abs(rows - 1.0) < 1e-9))
    log(f"  softmax rows sum to 1 +- 1e-9: {'pass' if softmax_ok else 'FAIL'}")
    ok &= softmax_ok
    _reorder_ok = _reorder_identity()
    log(f"  one-hot soft reordering equals hard: {'pass' if _reorder_ok else 'FAIL'}")
    ok &= _reorder_ok
    return ok


def _reorder_identity():
    for t_x in range(1, 8):
        for sp in range(1, t_x + 1):
            for j in range(1, t_x + 1):
                alpha = np.zeros(t_x)
                alpha[j - 1] = 1.0
                if smt_mod.reorder_cost_soft(sp, alpha) != smt_mod.reorder_cost_hard(sp, j):
                    return False
    return True
