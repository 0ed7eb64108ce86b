"""Deep belief net built from three mixed-signal RBM layers.

The top layer's visible side is partitioned into an image part (fed by
the second RBM's hidden states) and a 10-neuron label part sampled with
a softmax rule. Training is greedy and layer-wise, optionally followed
by wake-sleep fine-tuning with duplicated generative arrays. Inference
unfolds the stack into a forward-only pass, either deterministic or by
repeated stochastic sampling with majority vote.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .crossbar import CrossbarArray, CheckpointFormatError, sigmoid
from .device import DeviceParams, device_preset
from .rbm import RbmLayer, reconstruction_error

NET_MAGIC = b"MDBNNET\x00"
NET_VERSION = 1

PHASE_GREEDY = 0
PHASE_FINETUNE = 1
_GEN_STREAM_TAG = 0x67656E  # distinct entropy tag for generative-array init
_EVAL_STREAM_TAG = 0x6576


class TrainingStateError(RuntimeError):
    """Operation requires a training phase that has not run yet."""


@dataclass
class DbnConfig:
    """Network and training configuration.

    ``layer_sizes`` lists visible/hidden sizes bottom-up; the third entry
    includes the ``label_count`` label neurons of the top RBM's visible
    layer. ``cd_th`` is a single threshold or one per RBM (generative
    twins reuse their recognition layer's threshold).
    """

    layer_sizes: tuple = (784, 500, 510, 2000)
    label_count: int = 10
    greedy_epochs: int = 30
    finetune_epochs: int = 30
    cd_th: int | tuple = 64
    top_gibbs_iters: int = 20
    preset: str = "ideal-linear"
    activation_mode: str = "ideal-sigmoid"
    seed: int = 1234
    weight_range: float = 4.0
    invert_label_logits: bool = False
    device_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) != 4:
            raise ValueError(f"expected 4 layer sizes (three RBMs), got {self.layer_sizes}")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive: {self.layer_sizes}")
        if not 1 <= self.label_count < self.layer_sizes[2]:
            raise ValueError(f"label_count {self.label_count} must fit inside the top visible layer")
        if isinstance(self.cd_th, (list, tuple)) and len(self.cd_th) != 3:
            raise ValueError("per-layer cd_th needs exactly three entries")

    def cd_th_for(self, layer_index: int) -> int:
        if isinstance(self.cd_th, (list, tuple)):
            return int(self.cd_th[layer_index])
        return int(self.cd_th)

    def resolve_device(self) -> DeviceParams:
        params = device_preset(self.preset)
        if self.device_overrides:
            params = params.with_overrides(**self.device_overrides)
        return params

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        if isinstance(self.cd_th, tuple):
            d["cd_th"] = list(self.cd_th)
        return d


@dataclass
class EpochMetrics:
    """One row of the training log."""

    phase: str
    layer: str
    epoch: int
    recon_error: float
    label_recon_error: float = float("nan")
    pulses: int = 0
    acc_det: float = float("nan")
    acc_s50: float = float("nan")


def epoch_permutation(seed: int, phase: int, layer_index: int, epoch: int, n: int):
    """Deterministic presentation order for one epoch, independent of the
    main sampling stream (reference implementations can reproduce it)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, phase, layer_index, epoch]))
    return rng.permutation(n)


def one_hot(label: int, count: int = 10):
    if not 0 <= int(label) < count:
        raise ValueError(f"label {label} outside [0, {count})")
    vec = np.zeros(count, dtype=np.uint8)
    vec[int(label)] = 1
    return vec


class Dbn:
    """Three stacked mixed-signal RBMs with optional generative twins."""

    def __init__(self, config: DbnConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.params = config.resolve_device()
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        n_in, n1, top_m, top_n = config.layer_sizes
        self.n_hidden2 = top_m - config.label_count

        def build(m, n, index):
            array = CrossbarArray(m, n, self.params, self.rng,
                                  weight_range=config.weight_range)
            return RbmLayer(array, config.cd_th_for(index), config.activation_mode)

        self.rbm1 = build(n_in, n1, 0)
        self.rbm2 = build(n1, self.n_hidden2, 1)
        self.top = build(top_m, top_n, 2)
        self.gen1: RbmLayer | None = None
        self.gen2: RbmLayer | None = None
        self.trained = False
        self.finetuned = False
        self._eval_streams = 0

    # ------------------------------------------------------------- utilities

    @property
    def layers(self) -> dict[str, RbmLayer]:
        named = {"rbm1": self.rbm1, "rbm2": self.rbm2, "top": self.top}
        if self.gen1 is not None:
            named["gen1"] = self.gen1
            named["gen2"] = self.gen2
        return named

    def _eval_rng(self) -> np.random.Generator:
        """Fresh evaluation stream; keeps read-only passes from consuming
        the training stream."""
        rng = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, _EVAL_STREAM_TAG, self._eval_streams]))
        self._eval_streams += 1
        return rng

    def _label_logits(self, currents, i_ref):
        logits = self.top.array.activation(currents, i_ref)
        if self.config.invert_label_logits:
            logits = -logits
        return logits

    def _softmax_sample(self, label_currents, i_ref, rng):
        """Sample exactly one active label neuron (Eq.-style softmax)."""
        logits = self._label_logits(label_currents, i_ref)
        z = np.exp(logits - logits.max())
        p = z / z.sum()
        idx = int(np.searchsorted(np.cumsum(p), rng.random()))
        out = np.zeros(self.config.label_count, dtype=np.uint8)
        out[min(idx, self.config.label_count - 1)] = 1
        return out

    # ------------------------------------------------------------- top layer

    def top_rbm_gibbs(self, v_top, label, clamp_label: bool, iters: int, rng):
        """Alternating Gibbs sampling of the partitioned top RBM.

        ``label`` (one-hot or None) drives the label rows on the first
        forward pass and, when ``clamp_label``, on every later one; the
        backward pass sigmoid-samples the image part and softmax-samples
        the label part. Returns (v', l', first hidden, last hidden).
        """
        v_top = np.asarray(v_top, dtype=np.uint8)
        if v_top.shape != (self.n_hidden2,):
            raise ValueError(f"top visible state has shape {v_top.shape}, expected ({self.n_hidden2},)")
        lab = np.zeros(self.config.label_count, dtype=np.uint8) if label is None \
            else np.asarray(label, dtype=np.uint8)
        layer = self.top
        vis = np.concatenate([v_top, lab])
        h_first = layer.sample_hidden(vis, rng)
        h = h_first
        v_prime, l_prime = v_top, lab
        noisy = layer._noisy()
        for _ in range(int(iters)):
            currents = layer.array.backward_currents(h, noisy, rng)
            i_ref = layer.array.reference_current(h, side="cols")
            v_prime = layer.array.sample_output(
                currents[:self.n_hidden2], i_ref, layer.activation_mode, rng)
            l_prime = self._softmax_sample(currents[self.n_hidden2:], i_ref, rng)
            vis = np.concatenate([v_prime, lab if clamp_label else l_prime])
            h = layer.sample_hidden(vis, rng)
        return v_prime, l_prime, h_first, h

    def _train_top_sample(self, h2, lab, rng) -> tuple[float, float, int]:
        """CD-1 presentation of the clamped (image-part, label) input."""
        v_prime, l_prime, h_first, h_last = self.top_rbm_gibbs(
            h2, lab, clamp_label=False, iters=1, rng=rng)
        vis0 = np.concatenate([h2, lab]).astype(np.int8)
        vis1 = np.concatenate([v_prime, l_prime]).astype(np.int8)
        cd = vis0[:, None] * h_first.astype(np.int8)[None, :] \
            - vis1[:, None] * h_last.astype(np.int8)[None, :]
        pulses = self.top.accumulate_and_flush(cd, rng)
        return (reconstruction_error(h2, v_prime),
                reconstruction_error(lab, l_prime), pulses)

    # ---------------------------------------------------------------- greedy

    def greedy_train(self, images, labels, rng=None, epoch_hook=None) -> list[EpochMetrics]:
        """Layer-wise training: each RBM trains for ``greedy_epochs`` while
        the layers below are frozen and only feed sampled states upward.

        ``images`` is (N, visible) binary, ``labels`` is (N,) digits.
        ``epoch_hook(metrics_row, dbn)`` runs after every epoch (the
        harness uses it to record test accuracy into the row).
        """
        rng = rng if rng is not None else self.rng
        images = np.asarray(images, dtype=np.uint8)
        labels = np.asarray(labels)
        if images.ndim != 2 or images.shape[1] != self.config.layer_sizes[0]:
            raise ValueError(f"images shape {images.shape} incompatible with "
                             f"visible size {self.config.layer_sizes[0]}")
        if len(labels) != len(images):
            raise ValueError("images and labels differ in length")
        eye = np.eye(self.config.label_count, dtype=np.uint8)
        onehots = eye[labels.astype(int)]
        history: list[EpochMetrics] = []
        layer_names = ("rbm1", "rbm2", "top")
        self.trained = True  # net is usable (at chance) from the first presentation on

        for layer_index, name in enumerate(layer_names):
            layer = self.layers[name]
            for epoch in range(self.config.greedy_epochs):
                order = epoch_permutation(self.config.seed, PHASE_GREEDY,
                                          layer_index, epoch, len(images))
                err_sum = 0.0
                label_err_sum = 0.0
                pulses = 0
                for idx in order:
                    v = images[idx]
                    if layer_index == 0:
                        err, n_pulses = layer.train_on_sample(v, rng)
                    elif layer_index == 1:
                        h1 = self.rbm1.sample_hidden(v, rng)
                        err, n_pulses = layer.train_on_sample(h1, rng)
                    else:
                        h1 = self.rbm1.sample_hidden(v, rng)
                        h2 = self.rbm2.sample_hidden(h1, rng)
                        err, label_err, n_pulses = self._train_top_sample(
                            h2, onehots[idx], rng)
                        label_err_sum += label_err
                    err_sum += err
                    pulses += n_pulses
                row = EpochMetrics(
                    phase="greedy", layer=name, epoch=epoch,
                    recon_error=err_sum / max(len(images), 1),
                    label_recon_error=(label_err_sum / max(len(images), 1)
                                       if layer_index == 2 else float("nan")),
                    pulses=pulses)
                history.append(row)
                if epoch_hook is not None:
                    epoch_hook(row, self)
        return history

    # ------------------------------------------------------------- fine-tune

    def _clone_generative_layers(self):
        """Allocate the generative twins and copy the recognition
        conductances onto their working cells."""
        gen_rng = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, _GEN_STREAM_TAG]))

        def clone(src: RbmLayer, index: int) -> RbmLayer:
            array = CrossbarArray(src.m, src.n, self.params, gen_rng,
                                  weight_range=self.config.weight_range)
            array.g[:] = src.array.g
            array.g[array.stuck == 1] = self.params.g_min
            array.g[array.stuck == 2] = self.params.g_max
            return RbmLayer(array, self.config.cd_th_for(index), self.config.activation_mode)

        self.gen1 = clone(self.rbm1, 0)
        self.gen2 = clone(self.rbm2, 1)

    def wake_sleep_finetune(self, images, labels, rng=None, epoch_hook=None) -> list[EpochMetrics]:
        """Up-down fine-tuning on the same counter-gated hardware.

        Recognition weights learn from sleep-phase states, generative
        twins from wake-phase states, and the top RBM from the first/last
        states of its clamped Gibbs chain; every update stays ternary.
        """
        if not self.trained:
            raise TrainingStateError("wake-sleep fine-tuning requires greedy training first")
        rng = rng if rng is not None else self.rng
        if self.gen1 is None:
            self._clone_generative_layers()
        images = np.asarray(images, dtype=np.uint8)
        labels = np.asarray(labels)
        eye = np.eye(self.config.label_count, dtype=np.uint8)
        onehots = eye[labels.astype(int)]
        iters = self.config.top_gibbs_iters
        history: list[EpochMetrics] = []

        def outer_delta(a, b, shared, transpose=False):
            """Ternary (a - b) (x) shared, optionally shared (x) (a - b)."""
            d = a.astype(np.int8) - b.astype(np.int8)
            s = shared.astype(np.int8)
            return (s[:, None] * d[None, :]) if transpose else (d[:, None] * s[None, :])

        for epoch in range(self.config.finetune_epochs):
            order = epoch_permutation(self.config.seed, PHASE_FINETUNE, 0, epoch, len(images))
            err_sum = 0.0
            label_err_sum = 0.0
            pulses = 0
            for idx in order:
                v0 = images[idx]
                lab = onehots[idx]
                # wake (recognition) pass
                h1 = self.rbm1.sample_hidden(v0, rng)
                h2 = self.rbm2.sample_hidden(h1, rng)
                v2s, l_prime, h_first, h_last = self.top_rbm_gibbs(
                    h2, lab, clamp_label=True, iters=iters, rng=rng)
                vis0 = np.concatenate([h2, lab]).astype(np.int8)
                vis1 = np.concatenate([v2s, lab]).astype(np.int8)
                cd_top = vis0[:, None] * h_first.astype(np.int8)[None, :] \
                    - vis1[:, None] * h_last.astype(np.int8)[None, :]
                pulses += self.top.accumulate_and_flush(cd_top, rng)
                # sleep (generative) pass down from the top reconstruction
                s1 = self.gen2.sample_visible(v2s, rng)
                s0 = self.gen1.sample_visible(s1, rng)
                # generative twins learn to reproduce the wake states
                vhat0 = self.gen1.sample_visible(h1, rng)
                pulses += self.gen1.accumulate_and_flush(outer_delta(v0, vhat0, h1), rng)
                hhat1 = self.gen2.sample_visible(h2, rng)
                pulses += self.gen2.accumulate_and_flush(outer_delta(h1, hhat1, h2), rng)
                # recognition weights learn to invert the sleep states
                shat1 = self.rbm1.sample_hidden(s0, rng)
                pulses += self.rbm1.accumulate_and_flush(outer_delta(s1, shat1, s0, transpose=True), rng)
                shat2 = self.rbm2.sample_hidden(s1, rng)
                pulses += self.rbm2.accumulate_and_flush(outer_delta(v2s, shat2, s1, transpose=True), rng)
                err_sum += reconstruction_error(v0, s0)
                label_err_sum += reconstruction_error(lab, l_prime)
            row = EpochMetrics(
                phase="finetune", layer="all", epoch=epoch,
                recon_error=err_sum / max(len(images), 1),
                label_recon_error=label_err_sum / max(len(images), 1),
                pulses=pulses)
            history.append(row)
            if epoch_hook is not None:
                epoch_hook(row, self)
        self.finetuned = True
        return history

    # -------------------------------------------------------------- inference

    def _label_drive(self, h_top):
        """Backward label currents and reference for a top hidden state."""
        currents = self.top.array.backward_currents(h_top)
        i_ref = self.top.array.reference_current(h_top, side="cols")
        return currents[self.n_hidden2:], i_ref

    def infer(self, image, mode: str = "deterministic", repeats: int = 1, rng=None):
        """Classify one image; returns (label, vote histogram).

        Deterministic mode thresholds every neuron at zero drive with all
        noise off and ignores ``repeats``; sampling mode re-runs the full
        stochastic pass per repeat and majority-votes the sampled labels
        (ties resolve to the lowest label).
        """
        if not self.trained:
            raise TrainingStateError("network has not been trained")
        image = np.asarray(image, dtype=np.uint8)
        zeros = np.zeros(self.config.label_count, dtype=np.uint8)
        if mode in ("deterministic", "det"):
            h1 = self._det_forward(self.rbm1, image)
            h2 = self._det_forward(self.rbm2, h1)
            h3 = self._det_forward(self.top, np.concatenate([h2, zeros]))
            label_currents, i_ref = self._label_drive(h3)
            logits = self._label_logits(label_currents, i_ref)
            label = int(np.argmax(logits))
            votes = np.zeros(self.config.label_count, dtype=np.int64)
            votes[label] = 1
            return label, votes
        if mode not in ("sampling", "sample"):
            raise ValueError(f"unknown inference mode {mode!r}")
        rng = rng if rng is not None else self._eval_rng()
        votes = np.zeros(self.config.label_count, dtype=np.int64)
        for _ in range(int(repeats)):
            h1 = self.rbm1.sample_hidden(image, rng)
            h2 = self.rbm2.sample_hidden(h1, rng)
            h3 = self.top.sample_hidden(np.concatenate([h2, zeros]), rng)
            label_currents, i_ref = self._label_drive(h3)
            votes += self._softmax_sample(label_currents, i_ref, rng)
        return int(np.argmax(votes)), votes

    @staticmethod
    def _det_forward(layer: RbmLayer, v):
        currents = layer.array.forward_currents(v)
        i_ref = layer.array.reference_current(v)
        return layer.array.sample_output(currents, i_ref, "deterministic")

    def evaluate(self, images, labels, mode: str = "deterministic",
                 repeats: int = 1, rng=None) -> float:
        """Accuracy over a test set (batched, statistically equivalent to
        mapping ``infer``; deterministic mode matches it exactly)."""
        if not self.trained:
            raise TrainingStateError("network has not been trained")
        images = np.asarray(images, dtype=np.float64)
        labels = np.asarray(labels)
        if len(images) == 0:
            raise ValueError("empty test set")
        predictions = self.predict_batch(images, mode, repeats, rng)
        return float(np.mean(predictions == labels.astype(int)))

    def predict_batch(self, images, mode: str = "deterministic",
                      repeats: int = 1, rng=None):
        """Predicted labels for a batch of images."""
        if not self.trained:
            raise TrainingStateError("network has not been trained")
        images = np.asarray(images, dtype=np.float64)
        batch = len(images)
        pad = np.zeros((batch, self.config.label_count))

        def det_pass(layer, x):
            currents = layer.array.forward_currents_batch(x)
            i_ref = layer.array.reference_currents_batch(x)
            return layer.array.sample_output_batch(currents, i_ref, "deterministic")

        def label_logits_batch(h3):
            eff = (self.top.array.g[0] - self.top.array.g[1] + self.top.array.g_ref
                   if self.top.array.is_pair else self.top.array.g[0])
            currents = self.top.array.v_read * (h3 @ eff[self.n_hidden2:].T)
            i_ref = h3.sum(axis=1) * self.top.array.v_read * self.top.array.g_ref
            logits = (currents - i_ref[:, None]) * self.top.array.weight_scale / self.top.array.v_read
            return -logits if self.config.invert_label_logits else logits

        if mode in ("deterministic", "det"):
            h1 = det_pass(self.rbm1, images)
            h2 = det_pass(self.rbm2, h1)
            h3 = det_pass(self.top, np.hstack([h2, pad]))
            return np.argmax(label_logits_batch(h3), axis=1)
        if mode not in ("sampling", "sample"):
            raise ValueError(f"unknown inference mode {mode!r}")
        rng = rng if rng is not None else self._eval_rng()
        votes = np.zeros((batch, self.config.label_count), dtype=np.int64)

        def stochastic_pass(layer, x):
            noisy = layer._noisy()
            currents = layer.array.forward_currents_batch(x, noisy, rng)
            i_ref = layer.array.reference_currents_batch(x)
            return layer.array.sample_output_batch(currents, i_ref, layer.activation_mode, rng)

        for _ in range(int(repeats)):
            h1 = stochastic_pass(self.rbm1, images)
            h2 = stochastic_pass(self.rbm2, h1)
            h3 = stochastic_pass(self.top, np.hstack([h2, pad]))
            logits = label_logits_batch(h3)
            z = np.exp(logits - logits.max(axis=1, keepdims=True))
            p = z / z.sum(axis=1, keepdims=True)
            draws = rng.random((batch, 1))
            picked = (p.cumsum(axis=1) > draws).argmax(axis=1)
            votes[np.arange(batch), picked] += 1
        return np.argmax(votes, axis=1)

    # ------------------------------------------------------------- generation

    def generate(self, label: int, rng=None):
        """Dream one image for a digit label via the generative path.

        Starts the top RBM from a random binary visible state with the
        label clamped, Gibbs-samples, then propagates the reconstruction
        down through the generative twins; the output is the final
        sigmoid probability of each of the 784 visible units.
        """
        if not self.finetuned or self.gen1 is None:
            raise TrainingStateError("generation requires wake-sleep fine-tuning")
        rng = rng if rng is not None else self._eval_rng()
        lab = one_hot(label, self.config.label_count)
        v_top = (rng.random(self.n_hidden2) < 0.5).astype(np.uint8)
        v2s, _l, _h0, _hT = self.top_rbm_gibbs(
            v_top, lab, clamp_label=True, iters=self.config.top_gibbs_iters, rng=rng)
        s1 = self.gen2.sample_visible(v2s, rng)
        currents = self.gen1.array.backward_currents(s1, self.gen1._noisy(), rng)
        i_ref = self.gen1.array.reference_current(s1, side="cols")
        return sigmoid(self.gen1.array.activation(currents, i_ref))

    # ------------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        """Write the full-network checkpoint: JSON config header followed
        by one crossbar block per layer and the per-device write counts."""
        layer_names = ["rbm1", "rbm2", "top"] + (["gen1", "gen2"] if self.gen1 else [])
        header = {
            "version": NET_VERSION,
            "config": self.config.to_dict(),
            "device_params": asdict(self.params),
            "trained": self.trained,
            "finetuned": self.finetuned,
            "layers": layer_names,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(NET_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for name in layer_names:
                self.layers[name].array.write_block(fh)
            for name in layer_names:
                counts = self.layers[name].array.write_counts
                fh.write(counts.astype("<i8").tobytes())

    @classmethod
    def load(cls, path) -> "Dbn":
        """Reconstruct a network from a checkpoint.

        Construction replays the config seed, so per-device non-ideality
        samples match the original run; conductances, stuck flags and
        write counts then load from the file.
        """
        with open(path, "rb") as fh:
            magic = fh.read(len(NET_MAGIC))
            if magic != NET_MAGIC:
                raise CheckpointFormatError(f"bad network magic {magic!r}", 0)
            raw_len = fh.read(4)
            if len(raw_len) < 4:
                raise CheckpointFormatError("truncated header length", fh.tell())
            (header_len,) = struct.unpack("<I", raw_len)
            blob = fh.read(header_len)
            if len(blob) < header_len:
                raise CheckpointFormatError("truncated header", fh.tell())
            try:
                header = json.loads(blob)
            except json.JSONDecodeError as exc:
                raise CheckpointFormatError(f"invalid header JSON: {exc}", len(NET_MAGIC) + 4)
            if header.get("version") != NET_VERSION:
                raise CheckpointFormatError(f"unsupported version {header.get('version')}", len(NET_MAGIC) + 4)
            cfg = dict(header["config"])
            cfg["layer_sizes"] = tuple(cfg["layer_sizes"])
            if isinstance(cfg.get("cd_th"), list):
                cfg["cd_th"] = tuple(cfg["cd_th"])
            dbn = cls(DbnConfig(**cfg))
            if header["finetuned"]:
                dbn._clone_generative_layers()
            for name in header["layers"]:
                dbn.layers[name].array.read_block(fh)
            for name in header["layers"]:
                array = dbn.layers[name].array
                nbytes = 8 * array.write_counts.size
                raw = fh.read(nbytes)
                if len(raw) < nbytes:
                    raise CheckpointFormatError("truncated write counts", fh.tell())
                array.write_counts = np.frombuffer(raw, dtype="<i8").reshape(
                    array.write_counts.shape).copy()
            dbn.trained = bool(header["trained"])
            dbn.finetuned = bool(header["finetuned"])
            return dbn
