from FORMHOM import analyze
from FORMHOM.util import observer as obs

import json
import os
import sys

#fits below this r^2 are not trusted
MIN_R_SQUARED = 0.9


def setup_config(config_file):

    config = obs.ExperimentConfig.from_file(config_file)
    config.set('verbose', True)

    return config


def run_check(threads=4):

    config = setup_config("rate.cfg")
    if analyze.run(config, threads=threads) != 0:
        print("FAIL: rate run did not finish")
        return False

    with open(os.path.join(config.get_output_dir(), 'results.json')) as infile:
        results = json.load(infile)['results']

    alpha, r_squared = results['rate']['alpha'], results['rate']['r_squared']
    print("D_n   ", results['D'])
    print("alpha {}, r^2 {}, criterion alpha > 0 and r^2 > {}".format(alpha, r_squared, MIN_R_SQUARED))
    print("C_n 3^(n alpha) {}, spread {}, criterion spread < {}".format(
          results['os_scaled'], results['os_spread'], analyze.OS_SPREAD_FACTOR))

    #alpha is written as a string when infinite
    rate_ok = isinstance(alpha, float) and alpha > 0 and r_squared > MIN_R_SQUARED
    passed = rate_ok and results['os_within_factor'] is True
    print("PASS" if passed else "FAIL")

    return passed


if __name__ == "__main__":

    sys.exit(0 if run_check() else 1)
