"""
Encrypted distances with fixed-point coordinates
================================================

Real coordinates become scaled integers, each coordinate is encrypted on its
own, and the squared Euclidean distance and the dot product are computed on
ciphertexts.
"""
import random

import numpy as np

from picsearch import he
from picsearch.encvec import (PlainVector, decrypt_scaled, decrypt_score, encrypt_vector, phi_distance,
                              phi_dot, vector_payload)
from picsearch.fixedpoint import DEFAULT_FXP, decode, encode, encode_array, fxp_mul

rng = random.Random(1)
params = he.gen_params(128, 2, rng)
k = he.gen_key(params, rng)

# 16 fractional bits: 1.5 is stored as 1.5 * 2^16
print("encode(1.5).raw =", encode(1.5).raw)
print("0.5 * 0.5 =", decode(fxp_mul(encode(0.5), encode(0.5))))

x = np.array([1.0, 2.0])
y = np.array([4.0, 6.0])
ex = encrypt_vector(PlainVector.from_raw(encode_array(x)), k, rng)
ey = encrypt_vector(PlainVector.from_raw(encode_array(y)), k, rng)

# distances come back at scale 2^32 and are rescaled after decryption
phi = phi_distance(ex, ey)
print("scaled distance:", decrypt_scaled(phi, k), "=", 25, "* 2^32")
print("distance:", decrypt_score(phi, k))
print("dot product:", decrypt_score(phi_dot(ex, ey), k))

# a SIFT-sized vector
v = np.random.default_rng(0).uniform(0, 255, 128)
ev = encrypt_vector(PlainVector.from_raw(encode_array(v)), k, rng)
print("128-dim encrypted payload:", len(vector_payload(ev)), "bytes")
print("fixed-point resolution:", DEFAULT_FXP.resolution)
