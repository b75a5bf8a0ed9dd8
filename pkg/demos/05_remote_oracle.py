# Attacking a classifier that lives in another process.
#
# The oracle protocol is newline-delimited JSON: the client sends
# {"id", "width", "height", "pixels"} with base64 raw RGB bytes and the server
# answers {"id", "probs"}. Here the bundled loopback server hosts the toy
# classifier; a real deployment would wrap a DNN the same way.

import sys
import tempfile
from pathlib import Path

from colorfool import toy
from colorfool.attack import AttackConfig, attack
from colorfool.colorspace import srgb_to_lab
from colorfool.oracle import RemoteOracle, cached
from colorfool.regions import decompose, load_category_mapping
from colorfool.server import OracleServer

rgb, labels = toy.scenes(1, seed=5)[0]
regions = decompose(srgb_to_lab(rgb), labels, load_category_mapping())
model = toy.template_classifier()

# Over TCP, with a query cache in front.
with OracleServer(model.predict) as server, cached(RemoteOracle(server.address)) as remote:
    result = attack(rgb, regions, remote, AttackConfig(1000, seed=2))
    print(f"tcp:   success={result.success} trials={result.trials_used} "
          f"backend calls={remote.inner.queries} cache hits={remote.hits}")

# Over a stdio pipe to a child process.
with tempfile.TemporaryDirectory() as tmp:
    weights = Path(tmp) / "template.txt"
    model.save(weights)
    endpoint = f"exec:{sys.executable} -m colorfool.server --weights {weights} --stdio"
    with RemoteOracle(endpoint) as remote:
        again = attack(rgb, regions, remote, AttackConfig(1000, seed=2))
    print(f"stdio: success={again.success} trials={again.trials_used}, "
          f"same image as tcp run: {again.adversarial.tobytes() == result.adversarial.tobytes()}")
