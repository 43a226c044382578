# Copyright 2026 The qamlz Authors
#
#    Licensed under the Apache License, Version 2.0 (the "License");
#    you may not use this file except in compliance with the License.
#    You may obtain a copy of the License at
#
#        http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS,
#    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#    See the License for the specific language governing permissions and
#    limitations under the License.
"""Zoomed annealing classifier training for weighted event samples."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    FeaturePipeline,
    InfeasibleError,
    IsingProblem,
    apply_preselection,
    asimov,
    augmented_size,
    fit_pca,
    fix_variables,
    fom,
    fom_scan,
    generate_synthetic,
    ks_test,
    load_events,
    prune,
    retained_couplers,
    run_cli,
    save_events,
    solve_chain,
    solve_exact,
    solve_sa,
    split_samples,
    strong_scores,
    train,
)

__version__ = "0.1.0"
