"""Rotations as 6D vectors: encode, perturb, decode.

The denoiser predicts two 3-vectors per joint instead of a matrix. Any pair
that is not parallel decodes to a valid rotation, so the network never has
to stay on the rotation manifold by itself.
"""
import numpy as np

from motionstitch.rotation import euler_to_matrix, geodesic_distance, is_rotation, matrix_to_sixd, sixd_to_matrix

R = euler_to_matrix([30.0, -45.0, 60.0], "ZXY")
r6 = matrix_to_sixd(R)
print("6D code of a ZXY rotation:", np.round(r6, 4))

# Noise like a network output: the decode still lands on SO(3).
noisy = r6 + np.random.default_rng(0).normal(scale=0.1, size=6)
R_noisy = sixd_to_matrix(noisy)
print("decoded noisy code is a rotation:", is_rotation(R_noisy))
print(f"angle between clean and noisy rotation: {np.degrees(geodesic_distance(R, R_noisy)):.2f} deg")
