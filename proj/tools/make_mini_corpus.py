#!/usr/bin/env python3
# Copyright 2026 The iblmm Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes data/mini_corpus.csv: 4 categories x 50 documents, each category
drawing its words from its own vocabulary."""

import csv
import pathlib
import random
import sys

VOCABULARY = {
    "astronomy": "planet orbit telescope galaxy comet nebula asteroid meteor solar lunar eclipse "
                 "star cosmos gravity quasar pulsar supernova observatory spectrum redshift "
                 "constellation satellite crater horizon zenith",
    "cooking": "recipe oven bake flour butter sugar garlic onion simmer roast kitchen chef "
               "sauce pepper salt dough knead whisk skillet boil broth spice basil tomato pastry",
    "finance": "market stock bond equity dividend investor portfolio interest inflation bank "
               "credit loan mortgage currency trader hedge budget revenue profit audit tax "
               "broker fund yield asset",
    "sports": "football soccer tennis goal referee coach athlete stadium league tournament "
              "match score player team sprint marathon medal trophy racket penalty dribble "
              "umpire inning wicket champion",
}


def main(out_path: str) -> None:
    rng = random.Random(20260101)
    rows = []
    for label, words in VOCABULARY.items():
        vocab = words.split()
        weights = [1.0 / (rank + 1) for rank in range(len(vocab))]
        for _ in range(50):
            length = rng.randint(40, 80)
            doc = rng.choices(vocab, weights=weights, k=length)
            rows.append((label, " ".join(doc)))
    path = pathlib.Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label", "text"])
        writer.writerows(rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mini_corpus.csv")
