"""Synthetic embeddings and candidate-set corruption.

Class prototypes live on the unit sphere; instances are renormalized
Gaussian perturbations. Candidate sets keep the true label and add each
other seen label independently with probability q.
"""

import numpy as np

from pzsl import (
    ClassVocabulary,
    build_prompts,
    candidate_stats,
    synth_embeddings,
    synthesize_candidates,
)

vocab = ClassVocabulary(
    seen=["cat", "dog", "horse", "ship", "truck", "deer", "frog", "bird"],
    unseen=["airplane", "automobile"],
)
print("prompts:", build_prompts(vocab)[:3], "...")

instances, labels, truth = synth_embeddings(vocab, n_per_class=100, dim=32,
                                            noise_sigma=0.4, seed=7)
print(f"instances {instances.count}x{instances.dim}, labels {labels.count}x{labels.dim}")

scores = instances.data @ labels.data.T
acc = (scores.argmax(axis=1) == np.asarray(truth)).mean()
print(f"nearest-prototype accuracy over all classes: {acc:.3f}")

seen_truth = np.asarray(truth)[np.asarray(truth) < vocab.num_seen]
for q in (0.1, 0.3, 0.5):
    ds = synthesize_candidates(seen_truth, vocab.num_seen, q, seed=7)
    stats = candidate_stats(ds)
    expected = 1 + (vocab.num_seen - 1) * q
    print(f"q={q}: mean |S| {stats['mean_size']:.2f} (closed form {expected:.2f}), "
          f"ambiguous {stats['ambiguity_rate']:.1%}")
