"""Incremental NMEA -> context classification, one result per closed epoch."""

from __future__ import annotations

import time
from collections import deque
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from . import gru
from .features import feature_vector
from .nmea import EpochAssembler, RawSentence, parse_sentence
from .svm import SvmModel, TemporalFilter, predict_svm


class StreamClassifier:
    """Feeds NMEA lines through epoch assembly, features and a classifier.

    With a GRU model a result is produced once ``window`` epochs have been
    seen. With an SVM model every epoch is classified and passed through the
    causal majority filter; confidence is the filtered label's vote share.
    """

    def __init__(self, model: Union[gru.GruModel, SvmModel], window: int = 6):
        self.model = model
        self.is_gru = isinstance(model, gru.GruModel)
        self.window = model.window if self.is_gru else window
        self.mode = model.mode
        self._asm = EpochAssembler()
        self._feats: deque = deque(maxlen=self.window)
        self._votes: deque = deque(maxlen=self.window)
        self._filter = TemporalFilter(self.window)
        # total processing time of all lines belonging to each classified epoch
        self.latencies: list = []
        self._spent = 0.0

    def _classify(self, epoch) -> Optional[tuple]:
        x = feature_vector(epoch, self.mode)
        if self.is_gru:
            self._feats.append(x)
            if len(self._feats) < self.window:
                return None
            label, probs = gru.predict(np.array(self._feats), self.model)
            return epoch.timestamp, label, float(probs[label])
        raw = predict_svm(x, self.model)
        self._votes.append(raw)
        label = self._filter.push(raw)
        return epoch.timestamp, label, self._votes.count(label) / len(self._votes)

    def push_line(self, line: str) -> Optional[tuple]:
        start = time.perf_counter()
        s = parse_sentence(line)
        epoch = self._asm.push(s) if isinstance(s, RawSentence) else None
        out = self._classify(epoch) if epoch is not None else None
        self._spent += time.perf_counter() - start
        if epoch is not None:
            self.latencies.append(self._spent)
            self._spent = 0.0
        return out

    def finish(self) -> Optional[tuple]:
        epoch = self._asm.finish()
        return None if epoch is None else self._classify(epoch)

    def run(self, lines: Iterable[str]) -> Iterator[tuple]:
        for line in lines:
            out = self.push_line(line)
            if out is not None:
                yield out
        out = self.finish()
        if out is not None:
            yield out
