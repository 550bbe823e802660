import math

import pytest

from wnoskit.errors import StopPropagation
from wnoskit.signals import Filters, MessageKind, SignalingMessage, SignalRouter


def report(kind=MessageKind.DUAL_REPORT, source=3, family=0, hops=0) -> SignalingMessage:
    return SignalingMessage(kind, source, 0.25, timestamp=12, destination=7, hop_budget=hops, family=family)


class TestMessages:
    def test_payload_must_be_finite(self):
        with pytest.raises(ValueError):
            SignalingMessage(MessageKind.DUAL_REPORT, 0, math.nan, 0, 1)
        with pytest.raises(ValueError):
            SignalingMessage(MessageKind.GRADIENT_REPORT, 0, math.inf, 0, 1)
        with pytest.raises(ValueError):
            report(hops=-1)

    def test_advance(self):
        message = report(hops=2)
        assert not message.delivered
        assert message.advance().advance().delivered
        assert message.advance().advance().advance().hop_budget == 0
        assert message.hop_budget == 2

    def test_as_dict(self):
        assert report(kind=MessageKind.GRADIENT_REPORT).as_dict() == {
            "kind": "gradient_report",
            "source": 3,
            "payload": 0.25,
            "timestamp": 12,
            "destination": 7,
            "family": 0,
        }


class TestRouter:
    def test_first_passing_handler_per_group(self):
        router = SignalRouter()
        calls = []

        def gradients(node, message):
            calls.append("gradients")

        def anything(node, message):
            calls.append("anything")

        def first(node, message):
            calls.append("first")

        router.register_handler(gradients, Filters.Kind(MessageKind.GRADIENT_REPORT))
        router.register_handler(anything)
        router.register_handler(first, group=-1)

        assert router.dispatch(None, report())
        assert calls == ["first", "anything"]
        calls.clear()
        router.dispatch(None, report(kind=MessageKind.GRADIENT_REPORT))
        assert calls == ["first", "gradients"]

    def test_stop_propagation(self):
        router = SignalRouter()
        calls = []

        def stop(node, message):
            calls.append("stop")
            raise StopPropagation

        def later(node, message):
            calls.append("later")

        router.register_handler(later, group=1)
        router.register_handler(stop, Filters.Family(0), group=0)
        assert not router.dispatch(None, report())
        assert calls == ["stop"]
        calls.clear()
        assert router.dispatch(None, report(family=1))
        assert calls == ["later"]

    def test_source_filter_is_dynamic(self):
        router = SignalRouter()
        seen = []
        sources = Filters.Source(1)
        router.register_handler(lambda node, message: seen.append(message.source), sources)
        router.dispatch(None, report(source=3))
        sources.sources.add(3)
        router.dispatch(None, report(source=3))
        assert seen == [3]

    def test_invalid_kind_filter(self):
        with pytest.raises(ValueError):
            Filters.Kind([])
        with pytest.raises(ValueError):
            Filters.Kind(["dual_report"])
