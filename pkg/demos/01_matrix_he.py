"""
Matrix homomorphic encryption
=============================

Encrypt integers as conjugated upper-triangular matrices, compute on them,
and move a ciphertext between keys without decrypting it.
"""
import random

from picsearch import he

rng = random.Random(0)

# a 2x128-bit modulus and 4x4 matrices
params = he.gen_params(128, 2, rng)
print("modulus bits:", params.n.bit_length(), " matrix size:", params.d)

k = he.gen_key(params, rng)
a, b = he.encrypt(1234, k, rng), he.encrypt(5678, k, rng)

# sums and products are plain matrix sums and products
print("a + b  ->", he.decrypt(a + b, k))
print("a * b  ->", he.decrypt(a * b, k))
print("a*a*b - b ->", he.decrypt(a * a * b - b, k), "expected", (1234 * 1234 * 5678 - 5678) % params.n)

# split k into three ordered shares and re-key step by step
k1, k2, k3 = he.split_key(k, 3, rng)
c = he.encrypt(42, k1, rng)
c = he.convert_append(c, k2)
c = he.convert_append(c, k3)
print("after two conversions, under k:", he.decrypt(c, k))

# stripping the last share brings it back to k1*k2
print("strip k3, decrypt under k1*k2:", he.decrypt(he.convert_strip(c, k3), k1 @ k2))

# one ciphertext is 16 entries of 32 bytes
print("ciphertext bytes:", len(he.ciphertext_payload(c)))
