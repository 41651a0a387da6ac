# The tape records operations; backward replays them in reverse.
import numpy as np

from dgae import autodiff as ad

rng = np.random.default_rng(0)
w = ad.Parameter(ad.glorot_init(4, 3, rng), name="w")
x = ad.constant(rng.normal(size=(5, 4)))

with ad.Tape() as tape:
    h = ad.relu(ad.matmul(x, w))
    loss = ad.sum_all(ad.mul(h, h))
ad.backward(loss, tape)
print("loss", loss.item(), "ops recorded", len(tape))

# compare one entry against a central difference
def f():
    return ad.sum_all(ad.mul(ad.relu(ad.matmul(x, w)), ad.relu(ad.matmul(x, w)))).item()

old = w.value[1, 2]
w.value[1, 2] = old + 1e-5
up = f()
w.value[1, 2] = old - 1e-5
down = f()
w.value[1, 2] = old
print("tape grad", w.grad[1, 2], "finite diff", (up - down) / 2e-5)

# Adam drives a quadratic to zero
p = ad.Parameter(np.array([[3.0, -2.0]]))
state = ad.AdamState(lr=0.1)
for step in range(300):
    ad.zero_grads([p])
    with ad.Tape() as tape:
        q = ad.sum_all(ad.mul(p, p))
    ad.backward(q, tape)
    ad.adam_step(state, [p])
    if step % 100 == 0:
        print(step, q.item())
print("final", p.value)
