"""
Visual vocabulary and tf-idf vectors
====================================

Cluster descriptor vectors into visual words, count the words in each image
and weight the counts so that rare words matter more.
"""
import numpy as np

from picsearch.descriptor import build_vocabulary, corpus_stats, quantize, weight_tfidf
from picsearch.synth import clustered_images

images = clustered_images(30, 25, 16, n_centres=10, seed=3)
vectors = np.vstack([img.vectors for img in images])
print("vectors:", vectors.shape)

vocab = build_vocabulary(vectors, v=20, max_iters=30, seed=0)
print("k-means inertia, first and last:", round(vocab.inertia_history[0]), round(vocab.inertia_history[-1]))

stats = corpus_stats(images, vocab)
print("images:", stats.N, " words present in every image:", int(np.sum(stats.doc_freq == stats.N)))

img = images[0]
counts = quantize(img, vocab)
w = weight_tfidf(counts, stats, img.image_id).weights
print("word counts of", img.image_id, counts)
print("tf-idf weights  ", np.round(w, 3))
