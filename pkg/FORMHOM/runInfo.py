'''

RunInfo Class Design

Basically a struct for the run-wide information that every stage of an experiment needs:
the validated config, the ensemble it describes, the thread count, the library version,
the config hash and the output directory. Handlers take a RunInfo instead of a pile of
separate arguments.

The hash and the result body depend on the config alone. Thread count, timestamps and the
host only ever go into the metadata block.

'''

import os
import time
import platform

from . import __version__
from .util.parallel import resolve_threads
from .util.records import config_hash


class RunInfo:

    def __init__(self, config, threads=None, verbose=None):

        #do a verbosity check
        self.verbose = config.get('verbose') if verbose is None else verbose

        config.validate()
        self.config  = config
        self.command = config.get_command()
        self.spec    = config.get_spec()

        #explicit argument, then the config, then FORMHOM_THREADS
        if threads is None:
            threads = config.get('threads')
        self.threads = resolve_threads(threads)

        self.version = __version__
        self.hash    = config_hash(config.hash_dict())
        self.outdir  = config.get_output_dir()
        self.rtol    = config.get('rtol')
        self.seed    = config.get('seed')

        self.started = time.time()

        self.vprint("\nRunning '{}' on {} with {} thread(s)".format(self.command, self.spec.to_string(), self.threads))
        self.vprint("Config hash {}".format(self.hash))

    def vprint(self, msg):

        if self.verbose:
            print(msg)

    def get(self, key):

        return self.config.get(key)

    def output_path(self, name):

        os.makedirs(self.outdir, exist_ok=True)
        return os.path.join(self.outdir, name)

    def config_body(self):
        #the hashed config plus the identifying fields every output carries

        body = self.config.hash_dict()
        body.update({'ensemble': self.spec.to_string(), 'lambda': self.spec.lam})
        return body

    def metadata(self):

        return {'threads': self.threads, 'started': self.started, 'elapsed': time.time() - self.started,
                'host': platform.node(), 'python': platform.python_version()}
