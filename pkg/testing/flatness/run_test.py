from FORMHOM import analyze
from FORMHOM.util import observer as obs

import json
import numpy as np
import os
import sys


def setup_config(config_file):

    config = obs.ExperimentConfig.from_file(config_file)
    config.set('verbose', True)

    return config


if __name__ == "__main__":

    config = setup_config("flatness.cfg")
    if analyze.run(config, threads=4) != 0:
        print("FAIL: flatness run did not finish")
        sys.exit(1)

    with open(os.path.join(config.get_output_dir(), 'results.json')) as infile:
        results = json.load(infile)['results']

    for m, value, stderr in zip(results['levels'], results['flatness'], results['stderr']):
        print("m = {}: {:.4e} +- {:.1e}".format(m, value, stderr))
    print("criterion: flatness decreases from m = {} to m = {}".format(results['levels'][0], results['levels'][-1]))

    passed = bool(np.all(np.diff(results['flatness']) < 0))
    print("PASS" if passed else "FAIL")
    sys.exit(0 if passed else 1)
