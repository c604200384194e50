"""Joint positions from local rotations on the 22-joint body skeleton."""
import numpy as np

from motionstitch.kinematics import body22_skeleton, forward_kinematics
from motionstitch.rotation import axis_rotation

sk = body22_skeleton()
print(f"{sk.num_joints} joints, names: {', '.join(sk.names[:6])}, ...")

rot = np.broadcast_to(np.eye(3), (sk.num_joints, 3, 3)).copy()
rest = forward_kinematics(sk, rot, np.zeros(3))
print("identity rotations reproduce the rest pose:", np.array_equal(rest, sk.rest_offsets))

# Raise the left shoulder 90 degrees about the forward axis.
shoulder = sk.names.index("left_shoulder")
rot[shoulder] = axis_rotation("z", np.pi / 2)
posed = forward_kinematics(sk, rot, np.zeros(3))
moved = np.flatnonzero(np.linalg.norm(posed - rest, axis=1) > 1e-9)
print("joints that moved:", [sk.names[j] for j in moved])
