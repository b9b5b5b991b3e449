'''

The ExperimentConfig class stores what the user wants a FORMHOM run to do: which
experiment (command), on which ensemble, in which dimension and degree, at which cube
sizes, with how many samples and which seed. Options for the command are

1) sample-env     draw one environment and dump it (env.csv + env.json)
2) estimate-ahom  Monte Carlo estimate of the homogenized energy matrix on □_m
3) sequences      D_n, τ_n and the level estimates of āhom for n up to m_max
4) rate           sequences plus the fitted exponent of D_n
5) duality        āhom of the inverse ensemble against the inverse of āhom
6) dykhne         checkerboard estimate against sqrt(c1 c2) I
7) flatness       weak norms of the gradient and flux defects of the J maximizer
8) dirichlet      one boundary-value solve with affine data, cochain dumped
9) two-scale      homogenization error against ε = 3^{-k}
10) diagnostics   per-sample structural checks of J
11) os-calibrate  O_s scale of a sample file

Values come from defaults, then an optional key = value file, then command line flags.
Setters validate their value and raise ValueError; cross-field ranges are checked by
validate(). Keys may be written with dashes or underscores.

'''

import os

from ..forms.exterior import AltForm, num_forms
from ..homog.env import EnsembleSpec


def _to_bool(value):

    if isinstance(value, bool):
        return value

    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False

    raise ValueError("Cannot read {!r} as a boolean".format(value))


def _to_int_list(value):

    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]

    return [int(v) for v in str(value).replace(';', ',').split(',') if v.strip()]


def _optional(parser):

    return lambda value: None if value is None or str(value).strip().lower() in ('', 'none') else parser(value)


#key: (default, parser)
CONFIG_KEYS = {
    'command':        (None, str),
    'd':              (2, int),
    'r':              (1, int),
    'm':              (2, int),
    'm_max':          (3, int),
    'm_min':          (0, int),
    'ensemble':       ('iid-spd', str),
    'nsamples':       (10, int),
    'seed':           (0, int),
    'lambda':         (None, _optional(float)),
    'rtol':           (1e-10, float),
    'threads':        (None, _optional(int)),
    'output_dir':     ('formhom_out', str),
    'eps_exponents':  ([1, 2, 3], _to_int_list),
    'ref_m':          (3, int),
    'ref_nsamples':   (10, int),
    'fraction':       (0.5, float),
    'nprobes':        (10, int),
    'p_index':        (0, int),
    'q_index':        (0, int),
    's':              (1.0, float),
    'samples_file':   (None, _optional(str)),
    'dump_env':       (False, _to_bool),
    'allow_large':    (False, _to_bool),
    'verbose':        (False, _to_bool),
}

#left out of the config hash
UNHASHED_KEYS = ('threads', 'verbose', 'output_dir')

MAX_DIM   = 4
MAX_LEVEL = 7


class ExperimentConfig:

    def __init__(self, command=None, verbose=False):

        #set the allowed commands
        self.__allowed_commands = ['sample-env', 'estimate-ahom', 'sequences', 'rate', 'duality', 'dykhne',
                                   'flatness', 'dirichlet', 'two-scale', 'diagnostics', 'os-calibrate']

        self.__values = {key: list(default) if isinstance(default, list) else default
                         for key, (default, parser) in CONFIG_KEYS.items()}
        self.__verbose = verbose

        if command is not None:
            self.set_command(command)

    def vprint(self, msg):

        if self.__verbose:
            print(msg)

    @staticmethod
    def normalize_key(key):

        return key.strip().replace('-', '_')

    def get(self, key):

        key = self.normalize_key(key)
        if key not in self.__values:
            raise KeyError("Unknown config key '{}'".format(key))

        return self.__values[key]

    def set(self, key, value):
        #parse and store one value

        key = self.normalize_key(key)
        if key not in CONFIG_KEYS:
            raise KeyError("Unknown config key '{}'. Known keys: {}".format(key, sorted(CONFIG_KEYS)))

        if key == 'command':
            self.set_command(value)
            return

        parser = CONFIG_KEYS[key][1]
        try:
            parsed = parser(value)
        except (TypeError, ValueError):
            raise ValueError("Invalid value {!r} for config key '{}'".format(value, key))

        self.__values[key] = parsed
        if key == 'verbose':
            self.__verbose = parsed

        self.vprint("Config {} set to {}".format(key, parsed))

    def update(self, values):
        #set every value that is not None

        for key, value in values.items():
            if value is not None:
                self.set(key, value)

    def get_command(self):

        return self.__values['command']

    def set_command(self, command):

        if command not in self.__allowed_commands:
            raise ValueError('The specified command is not in the list of supported commands\n'\
                             +'Allowed commands: {}'.format(self.__allowed_commands))

        self.__values['command'] = command

    def get_allowed_commands(self):

        return list(self.__allowed_commands)

    def get_output_dir(self):

        return self.__values['output_dir']

    def output_path(self, name):

        return os.path.join(self.__values['output_dir'], name)

    def get_spec(self):

        v = self.__values
        return EnsembleSpec.parse(v['ensemble'], v['d'], v['r'], v['lambda'])

    def get_p(self):

        v = self.__values
        return AltForm.unit(v['d'], v['r'], v['p_index'])

    def get_q(self):

        v = self.__values
        return AltForm.unit(v['d'], v['d'] - v['r'], v['q_index'])

    def get_eps_list(self):

        return [3.0**(-k) for k in self.__values['eps_exponents']]

    @classmethod
    def from_file(cls, path, verbose=False):
        #read a flat key = value file, '#' starts a comment

        if not os.path.isfile(path):
            raise FileNotFoundError("Config file {} does not exist".format(path))

        config = cls(verbose=verbose)
        with open(path, 'r') as infile:
            for lineno, line in enumerate(infile, 1):
                line = line.split('#', 1)[0].strip()
                if not line:
                    continue
                if '=' not in line:
                    raise ValueError("Line {} of {} is not of the form key = value".format(lineno, path))
                key, value = line.split('=', 1)
                config.set(key, value.strip())

        return config

    def validate(self):
        #ranges across fields; raises ValueError

        v = self.__values

        if v['command'] is None:
            raise ValueError("No command given. Allowed commands: {}".format(self.__allowed_commands))

        large = v['allow_large']
        if v['d'] < 1 or (v['d'] > MAX_DIM and not large):
            raise ValueError("Dimension d={} outside 1..{} (set allow_large to override)".format(v['d'], MAX_DIM))

        if not 1 <= v['r'] <= v['d']:
            raise ValueError("Degree r={} outside 1..d={}".format(v['r'], v['d']))

        for key in ('m', 'm_max', 'm_min', 'ref_m'):
            if v[key] < 0 or (v[key] > MAX_LEVEL and not large):
                raise ValueError("{}={} outside 0..{} (set allow_large to override)".format(key, v[key], MAX_LEVEL))

        for k in v['eps_exponents']:
            if k < 1 or (k > MAX_LEVEL and not large):
                raise ValueError("eps exponent {} outside 1..{}".format(k, MAX_LEVEL))

        estimators = ('estimate-ahom', 'sequences', 'rate', 'duality', 'dykhne', 'flatness')
        if v['command'] in estimators and v['nsamples'] < 2:
            raise ValueError("nsamples must be at least 2 for {}, got {}".format(v['command'], v['nsamples']))

        if v['nsamples'] < 1 or v['ref_nsamples'] < 2:
            raise ValueError("Sample counts must be positive (ref_nsamples at least 2)")

        if v['lambda'] is not None and not 0 < v['lambda'] <= 1:
            raise ValueError("lambda must lie in (0,1], got {}".format(v['lambda']))

        if not 0 < v['rtol'] < 1:
            raise ValueError("rtol must lie in (0,1), got {}".format(v['rtol']))

        if not 0 < v['fraction'] < 1:
            raise ValueError("fraction must lie in (0,1), got {}".format(v['fraction']))

        if v['seed'] < 0 or v['nprobes'] < 0:
            raise ValueError("seed and nprobes must be non-negative")

        if not 0 <= v['p_index'] < num_forms(v['d'], v['r']):
            raise ValueError("p_index {} outside 0..{}".format(v['p_index'], num_forms(v['d'], v['r'])-1))

        if not 0 <= v['q_index'] < num_forms(v['d'], v['d'] - v['r']):
            raise ValueError("q_index {} outside 0..{}".format(v['q_index'], num_forms(v['d'], v['d']-v['r'])-1))

        if not v['s'] > 0:
            raise ValueError("s must be positive, got {}".format(v['s']))

        if v['threads'] is not None and v['threads'] < 1:
            raise ValueError("threads must be at least 1, got {}".format(v['threads']))

        if v['command'] == 'os-calibrate' and v['samples_file'] is None:
            raise ValueError("os-calibrate needs a samples_file")

        #parses the ensemble, raising on bad input
        self.get_spec()

    def to_dict(self):

        return dict(self.__values)

    def hash_dict(self):

        return {k: v for k, v in self.__values.items() if k not in UNHASHED_KEYS}
