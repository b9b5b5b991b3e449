'''

Result records of an experiment run.

Every run writes into its output directory

    results.json   {config, config_hash, version, results, metadata}
    results.csv    one row per scalar: experiment, n_or_eps, quantity, value, stderr
    solves.jsonl   one JSON object per named solve (only some commands)

JSON is written with sorted keys and a fixed float representation, and everything that
varies between identical runs (timestamps, thread count, host) is confined to the
metadata field, so the remaining body is byte-identical across reruns.

Non-finite floats are not valid JSON; they are written as the strings "inf", "-inf"
and "nan".

'''

import os
import json
import hashlib
import dataclasses

import numpy as np
import pandas as pd


RESULT_COLUMNS = ['experiment', 'n_or_eps', 'quantity', 'value', 'stderr']


def to_jsonable(obj):
    #numpy types, dataclasses and non-finite floats to plain JSON values

    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}

    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}

    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]

    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())

    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)

    if isinstance(obj, (int, np.integer)):
        return int(obj)

    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if np.isnan(value):
            return 'nan'
        if np.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value

    return obj


def canonical_json(obj):

    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(',', ':'))


def config_hash(hashable):
    #sha256 of the canonical JSON of the hashed config fields

    return hashlib.sha256(canonical_json(hashable).encode('utf-8')).hexdigest()


class ResultTable:
    '''Collects scalar observables in the order they are added.'''

    def __init__(self, experiment):

        self.__experiment = experiment
        self.__rows = []

    def add(self, n_or_eps, quantity, value, stderr=None):

        stderr = np.nan if stderr is None else float(stderr)
        self.__rows.append((self.__experiment, n_or_eps, quantity, float(value), stderr))

    def add_matrix(self, n_or_eps, name, matrix, stderr=None):
        #one row per entry, quantity name[i,j]

        matrix = np.atleast_2d(matrix)
        for (i, j), value in np.ndenumerate(matrix):
            err = None if stderr is None else np.atleast_2d(stderr)[i, j]
            self.add(n_or_eps, '{}[{},{}]'.format(name, i, j), value, err)

    def get_rows(self):

        return list(self.__rows)

    def to_frame(self):

        return pd.DataFrame(self.__rows, columns=RESULT_COLUMNS)

    def write(self, path):

        self.to_frame().to_csv(path, index=False)
        return path


def write_results(path, config, chash, version, results, metadata):

    body = {'config': config, 'config_hash': chash, 'version': version,
            'results': results, 'metadata': metadata}

    with open(path, 'w') as outfile:
        json.dump(to_jsonable(body), outfile, sort_keys=True, indent=2)
        outfile.write('\n')

    return path


def write_solve_records(path, records):

    with open(path, 'w') as outfile:
        for record in records:
            outfile.write(canonical_json(record) + '\n')

    return path


def load_samples(path):
    #nonnegative observables for O_s calibration: a 'value' column, or the first column

    if not os.path.isfile(path):
        raise FileNotFoundError("Samples file {} does not exist".format(path))

    frame = pd.read_csv(path)
    column = 'value' if 'value' in frame.columns else frame.columns[0]

    return frame[column].to_numpy(dtype=float)
