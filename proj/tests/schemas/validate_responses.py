#!/usr/bin/env python3
# Copyright 2026 The cbdebug Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Runs the fixture generator and validates every response body against the
published JSON schemas."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema
import referencing

FIXTURE_SCHEMA = {
    "run_list_empty": "run_list",
    "run_list": "run_list",
    "run_created": "run_record",
    "run": "run_record",
    "run_retrained": "run_record",
    "retrain_accepted": "run_record",
    "status": "status",
    "concepts": "concepts",
    "feedback_human": "feedback",
    "feedback_rule": "feedback",
    "metrics_before": "metrics",
    "metrics_after": "metrics",
    "histogram": "histogram",
    "error_not_found": "error",
    "error_unknown_concept": "error",
    "error_config": "error",
    "error_conflict": "error",
}


def main(argv):
    generator, schema_dir = argv[1], pathlib.Path(argv[2])
    schemas = {p.stem: json.loads(p.read_text()) for p in schema_dir.glob("*.json")}
    registry = referencing.Registry().with_resources(
        (s["$id"], referencing.Resource.from_contents(s)) for s in schemas.values())
    for s in schemas.values():
        jsonschema.Draft202012Validator.check_schema(s)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([generator, tmp], check=True)
        out = pathlib.Path(tmp)
        produced = {p.stem for p in out.glob("*.json")}
        missing = set(FIXTURE_SCHEMA) - produced
        unmapped = produced - set(FIXTURE_SCHEMA)
        if missing or unmapped:
            print(f"missing fixtures {sorted(missing)}, unmapped {sorted(unmapped)}")
            return 1
        failures = 0
        for fixture, schema in sorted(FIXTURE_SCHEMA.items()):
            body = json.loads((out / f"{fixture}.json").read_text())
            validator = jsonschema.Draft202012Validator(
                schemas[schema], registry=registry)
            errors = list(validator.iter_errors(body))
            for e in errors[:5]:
                print(f"{fixture} vs {schema}: {e.json_path}: {e.message}")
            failures += bool(errors)
            print(f"{fixture}: {'FAIL' if errors else 'ok'} ({schema})")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
