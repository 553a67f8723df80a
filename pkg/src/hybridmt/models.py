"""Top-level estimators: pure NMT and the SMT-advised hybrid.

Both follow the familiar fit/predict surface: `fit` consumes parallel
sentences (strings or token lists), `predict` translates source sentences
with beam search. `HybridTranslator` is a meta-estimator; hand it a fitted
`NmtTranslator`/`SmtRecommender` to reuse them, or let `fit` build its own.
"""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import decoding, nmt, training
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Vocabulary
from .decoding import DecodeOptions
from .fusion import AdvisorParams
from .rng import Rng
from .smt import SmtRecommender
from .training import TrainConfig
from .validation import as_token_sentences, check_parallel


def _decode_opts(beam_size, fixed_gate=None, pseudo_recs=False, unk_replace=True,
                 pseudo_seed=0):
    return DecodeOptions(
        beam_size=beam_size, fixed_gate=fixed_gate, pseudo_recs=pseudo_recs,
        unk_replace=unk_replace, pseudo_seed=pseudo_seed,
    )


class NmtTranslator(BaseEstimator):
    """Attention-based encoder-decoder trained with Adadelta."""

    def __init__(self, embed_dim=32, hidden_dim=64, attn_dim=32, readout_dim=32,
                 src_vocab_cap=200, tgt_vocab_cap=200, batch_size=16, epochs=30,
                 max_len=50, dev_fraction=0.1, beam_size=10, seed=0):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.attn_dim = attn_dim
        self.readout_dim = readout_dim
        self.src_vocab_cap = src_vocab_cap
        self.tgt_vocab_cap = tgt_vocab_cap
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_len = max_len
        self.dev_fraction = dev_fraction
        self.beam_size = beam_size
        self.seed = seed

    def _config(self):
        return TrainConfig(
            batch_size=self.batch_size, max_epochs=self.epochs, seed=self.seed,
            phase="pretrain", embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            attn_dim=self.attn_dim, readout_dim=self.readout_dim,
            src_vocab_cap=self.src_vocab_cap, tgt_vocab_cap=self.tgt_vocab_cap,
            max_len=self.max_len, dev_fraction=self.dev_fraction,
        )

    def fit(self, X, y, dev=None, log=None):
        """Train on parallel sentences; `dev` is an optional (X, y) pair,
        otherwise `dev_fraction` of the data is split off."""
        src = as_token_sentences(X)
        tgt = as_token_sentences(y)
        check_parallel(src, tgt)
        pairs = list(zip(src, tgt))
        if dev is not None:
            dev_pairs = list(zip(as_token_sentences(dev[0]), as_token_sentences(dev[1])))
            train_pairs = pairs
        else:
            train_pairs, dev_pairs = training.split_dev(pairs, self.dev_fraction, self.seed)
        self.src_vocab_ = Vocabulary.build([s for s, _ in train_pairs], self.src_vocab_cap)
        self.tgt_vocab_ = Vocabulary.build([t for _, t in train_pairs], self.tgt_vocab_cap)
        config = self._config()
        self.params_, self.history_, self.best_dev_nll_ = training.pretrain(
            train_pairs, dev_pairs, self.src_vocab_, self.tgt_vocab_, config, log
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        sentences = as_token_sentences(X)
        opts = _decode_opts(self.beam_size)
        out = decoding.translate_corpus(
            sentences, self.params_, self.src_vocab_, self.tgt_vocab_, opts=opts
        )
        return [" ".join(toks) for toks in out]

    def score(self, X, y):
        """Negative mean per-token NLL under teacher forcing (higher better)."""
        check_is_fitted(self, "params_")
        src = as_token_sentences(X)
        tgt = as_token_sentences(y)
        check_parallel(src, tgt)
        from .corpus import make_batches

        batches = make_batches(list(zip(src, tgt)), self.src_vocab_, self.tgt_vocab_,
                               self.batch_size, filter_long=False)
        _, per_token = training.corpus_nll(batches, self.params_)
        return -per_token

    def save(self, path):
        check_is_fitted(self, "params_")
        save_checkpoint(
            path, self.params_.tensors(), config=self.get_params(), seed=self.seed,
            extras={
                "kind": "nmt",
                "src_vocab": self.src_vocab_.to_dict(),
                "tgt_vocab": self.tgt_vocab_.to_dict(),
            },
        )

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        if ckpt.extras.get("kind") != "nmt":
            raise ValueError(f"{path} is not an NMT checkpoint")
        model = cls(**ckpt.config)
        model.src_vocab_ = Vocabulary.from_dict(ckpt.extras["src_vocab"])
        model.tgt_vocab_ = Vocabulary.from_dict(ckpt.extras["tgt_vocab"])
        rng = Rng(model.seed).derive("nmt-init")
        model.params_ = nmt.NmtParams(
            len(model.src_vocab_), len(model.tgt_vocab_), model.embed_dim,
            model.hidden_dim, model.attn_dim, model.readout_dim, rng,
        ).load_arrays(ckpt.params)
        model.history_ = []
        model.best_dev_nll_ = None
        return model


class HybridTranslator(BaseEstimator):
    """NMT advised by SMT recommendations through a learned classifier+gate.

    `nmt` and `smt` may be pre-fitted estimators (reused as-is) or None
    (built and fitted from the same data during `fit`). Decode-time ablations:
    `fixed_gate` pins the gate, `pseudo_recs` swaps in random high-frequency
    recommendations, `unk_replace` toggles UNK replacement.
    """

    def __init__(self, nmt=None, smt=None, classifier_dims=(32, 16),
                 gate_dims=(32, 16), epochs=10, batch_size=16, dev_fraction=0.1,
                 beam_size=10, fixed_gate=None, pseudo_recs=False,
                 unk_replace=True, seed=0):
        self.nmt = nmt
        self.smt = smt
        self.classifier_dims = classifier_dims
        self.gate_dims = gate_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.dev_fraction = dev_fraction
        self.beam_size = beam_size
        self.fixed_gate = fixed_gate
        self.pseudo_recs = pseudo_recs
        self.unk_replace = unk_replace
        self.seed = seed

    def fit(self, X, y, dev=None, log=None):
        src = as_token_sentences(X)
        tgt = as_token_sentences(y)
        check_parallel(src, tgt)
        pairs = list(zip(src, tgt))
        if dev is not None:
            dev_pairs = list(zip(as_token_sentences(dev[0]), as_token_sentences(dev[1])))
            train_pairs = pairs
        else:
            train_pairs, dev_pairs = training.split_dev(pairs, self.dev_fraction, self.seed)

        base = self.nmt if self.nmt is not None else NmtTranslator(seed=self.seed)
        if not hasattr(base, "params_"):
            base.fit(X, y, dev=dev, log=log)
        self.nmt_ = base
        self.src_vocab_ = base.src_vocab_
        self.tgt_vocab_ = base.tgt_vocab_

        advisor_model = self.smt if self.smt is not None else SmtRecommender()
        if not hasattr(advisor_model, "candidates_"):
            advisor_model.fit(X, y, target_vocab=self.tgt_vocab_)
        self.smt_ = advisor_model

        config = base._config()
        config.phase = "hybrid"
        config.max_epochs = self.epochs
        config.batch_size = self.batch_size
        config.seed = self.seed
        config.cls_hidden = tuple(self.classifier_dims)
        config.gate_hidden = tuple(self.gate_dims)
        nmt_arrays = {n: t.data for n, t in base.params_.tensors().items()}
        self.params_, self.advisor_, self.history_, self.best_dev_nll_ = (
            training.train_hybrid(
                train_pairs, dev_pairs, self.src_vocab_, self.tgt_vocab_,
                nmt_arrays, self.smt_, config, log,
            )
        )
        return self

    def _opts(self):
        return _decode_opts(self.beam_size, self.fixed_gate, self.pseudo_recs,
                            self.unk_replace, pseudo_seed=self.seed)

    def predict(self, X, trace_path=None):
        check_is_fitted(self, "params_")
        sentences = as_token_sentences(X)
        out = decoding.translate_corpus(
            sentences, self.params_, self.src_vocab_, self.tgt_vocab_,
            self.advisor_, self.smt_, self._opts(), trace_path=trace_path,
        )
        return [" ".join(toks) for toks in out]

    def score(self, X, y):
        """Negative mean per-token NLL of the fused model (higher better)."""
        check_is_fitted(self, "params_")
        src = as_token_sentences(X)
        tgt = as_token_sentences(y)
        check_parallel(src, tgt)
        from .corpus import make_batches

        batches = make_batches(list(zip(src, tgt)), self.src_vocab_, self.tgt_vocab_,
                               self.batch_size, filter_long=False)
        _, per_token = training.corpus_nll(
            batches, self.params_, self.advisor_, self.smt_, self.tgt_vocab_,
            self.fixed_gate,
        )
        return -per_token

    def save(self, path):
        check_is_fitted(self, "params_")
        params = dict(self.params_.tensors())
        params.update(self.advisor_.tensors())
        nmt_config = self.nmt_.get_params()
        own = self.get_params()
        own.pop("nmt")
        own.pop("smt")
        save_checkpoint(
            path, params, config={"hybrid": own, "nmt": nmt_config}, seed=self.seed,
            extras={
                "kind": "hybrid",
                "src_vocab": self.src_vocab_.to_dict(),
                "tgt_vocab": self.tgt_vocab_.to_dict(),
                "advisor_dims": self.advisor_.dims,
            },
        )

    @classmethod
    def load(cls, path, smt):
        """Load a hybrid checkpoint; the SMT model ships separately."""
        ckpt = load_checkpoint(path)
        if ckpt.extras.get("kind") != "hybrid":
            raise ValueError(f"{path} is not a hybrid checkpoint")
        model = cls(**{**ckpt.config["hybrid"],
                       "classifier_dims": tuple(ckpt.config["hybrid"]["classifier_dims"]),
                       "gate_dims": tuple(ckpt.config["hybrid"]["gate_dims"])})
        base = NmtTranslator(**ckpt.config["nmt"])
        base.src_vocab_ = Vocabulary.from_dict(ckpt.extras["src_vocab"])
        base.tgt_vocab_ = Vocabulary.from_dict(ckpt.extras["tgt_vocab"])
        model.nmt_ = base
        model.src_vocab_ = base.src_vocab_
        model.tgt_vocab_ = base.tgt_vocab_
        model.smt_ = smt
        rng = Rng(model.seed).derive("nmt-init")
        model.params_ = nmt.NmtParams(
            len(model.src_vocab_), len(model.tgt_vocab_), base.embed_dim,
            base.hidden_dim, base.attn_dim, base.readout_dim, rng,
        ).load_arrays(ckpt.params)
        adv_rng = Rng(model.seed).derive("advisor-init")
        model.advisor_ = AdvisorParams(
            base.embed_dim, base.hidden_dim, tuple(model.classifier_dims),
            tuple(model.gate_dims), adv_rng,
        ).load_arrays(ckpt.params)
        model.history_ = []
        model.best_dev_nll_ = None
        return model
