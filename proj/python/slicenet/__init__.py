"""Python front end for slicenet.

Every CLI verb is available as a function taking the same options as keyword
arguments (dashes become underscores) and returning the parsed JSON summary.
"""

import json

from ._slicenet import (
    ConfigError,
    DataError,
    IoError,
    SlicenetError,
    UsageError,
    choose_rate,
    count_flops,
    count_params,
    inclusion_coefficient,
    max_rate_for_budget,
    run_command,
)

__all__ = [
    "ConfigError",
    "DataError",
    "IoError",
    "SlicenetError",
    "UsageError",
    "cascade",
    "choose_rate",
    "cost",
    "count_flops",
    "count_params",
    "eval",
    "gen_data",
    "inclusion_coefficient",
    "max_rate_for_budget",
    "simulate",
    "sweep",
    "train",
    "widen",
]


def _command(verb):
    def run(**options):
        return json.loads(run_command(verb, json.dumps(options)))

    run.__name__ = verb.replace("-", "_")
    run.__doc__ = f"Run `slicenet {verb}`; returns the summary as a dict."
    return run


gen_data = _command("gen-data")
train = _command("train")
eval = _command("eval")  # noqa: A001 - mirrors the CLI verb
sweep = _command("sweep")
cost = _command("cost")
simulate = _command("simulate")
cascade = _command("cascade")
widen = _command("widen")
