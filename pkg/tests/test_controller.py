import numpy as np
import pytest

from zshim.controller import (ControllerConfig, Excitation, ExcitationSchedule,
                              compensation_moment, events_to_csv, make_excitation_schedule,
                              predict_gz, run_controller, sample_pressure)
from zshim.training import PressureTrace, ShimPlan, ShimPlanEntry, synth_pressure_trace

PERIOD = 3.0


@pytest.fixture
def trace():
    return synth_pressure_trace(PERIOD, 70.0, start_time_s=-2.0)


@pytest.mark.parametrize("p, expected", [(0.0, 5.0), (1.0, 7.0), (0.5, 6.0)])
def test_predict_gz(p, expected):
    assert predict_gz(ShimPlanEntry(0, 5.0, 2.0), p) == expected


def test_compensation_moment():
    assert compensation_moment(0.0, 15.0) == 0.0
    assert compensation_moment(10.0, 15.0) == -150.0
    assert compensation_moment(0.3, 2.5) < 0 < compensation_moment(-0.3, 2.5)
    with pytest.raises(ValueError):
        compensation_moment(1.0, 0.0)


class TestSamplePressure:
    def test_on_sample(self, trace):
        k = 137
        assert sample_pressure(trace, trace.times[k]) == trace.samples[k]

    def test_latency_quarter_period(self):
        tr = synth_pressure_trace(2.0, 20.0)
        t, lat = 5.34, 2.0 / 4
        expected = 0.5 + 0.5 * np.sin(2 * np.pi * (t - lat) / 2.0)
        assert sample_pressure(tr, t, lat) == pytest.approx(expected, abs=1e-12)
        # a quarter-period delay is a 90 degree phase lag
        assert expected == pytest.approx(0.5 - 0.5 * np.cos(2 * np.pi * t / 2.0), abs=1e-12)

    def test_between_samples_uses_tie_rule(self, trace):
        t = trace.times[300] + 0.010
        assert sample_pressure(trace, t) == trace.samples[300]

    def test_latency_shift_by_one_sample(self, trace):
        for t in np.linspace(5, 40, 23):
            i0 = trace.nearest_index(t - 0.05)
            i1 = trace.nearest_index(t - 0.05 - 0.02)
            assert i0 - i1 == 1

    def test_out_of_span(self, trace):
        with pytest.raises(ValueError):
            sample_pressure(trace, -1.5, latency_s=1.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ExcitationSchedule((Excitation(0.0, 0, 0), Excitation(1.0, 0, 0)), 2)
    with pytest.raises(ValueError):
        ExcitationSchedule((Excitation(1.0, 0, 0), Excitation(0.5, 0, 1)), 2)
    s = make_excitation_schedule(4, 1000, n_slices=2)
    assert s.slices == [0, 1] and len(s.excitations) == 8


def _run(trace, plan=None, latency=0.0, amp=9.0, te=(15.0,), ny=16):
    plan = plan or ShimPlan((ShimPlanEntry(0, 0.4, 0.25),))
    sched = make_excitation_schedule(ny, 1000)
    return run_controller(sched, trace, plan, ControllerConfig(latency, amp), PERIOD, te)


def test_zero_plan(trace):
    res = _run(trace, ShimPlan.zeros(), amp=0.0)
    assert all(m == 0 for ev in res.events for m in ev.moments)
    assert not res.schedule().riro_corr_value_hz.any()


def test_correction_values_analytic(trace):
    res = _run(trace)
    t = np.arange(16) * 1.0
    assert np.allclose(res.schedule().riro_corr_value_hz, 9.0 * np.sin(2 * np.pi * t / PERIOD),
                       atol=1e-12, rtol=0)


def test_latency_shifts_correction(trace):
    res = _run(trace, latency=0.1)
    t = np.arange(16) * 1.0 - 0.1
    assert np.allclose(res.schedule().riro_corr_value_hz, 9.0 * np.sin(2 * np.pi * t / PERIOD),
                       atol=1e-12, rtol=0)
    assert [ev.pressure for ev in res.events] == [sample_pressure(trace, ti + 0.1, 0.1)
                                                 for ti in t]


def test_events_follow_plan(trace):
    res = _run(trace, te=(5.0, 10.0))
    for ev in res.events:
        gz = 0.4 + 0.25 * ev.pressure
        assert ev.gz_hz_per_mm == pytest.approx(gz)
        assert ev.moments == pytest.approx((-gz * 5.0, -gz * 10.0))
    times = [ev.time_s for ev in res.events]
    assert times == sorted(times)


def test_moment_linearity(trace):
    a = _run(trace, ShimPlan((ShimPlanEntry(0, 0.4, 0.25),)))
    b = _run(trace, ShimPlan((ShimPlanEntry(0, 0.8, 0.5),)))
    for ea, eb in zip(a.events, b.events):
        assert eb.moments == pytest.approx(tuple(2 * m for m in ea.moments))


def test_deterministic(trace):
    a, b = _run(trace), _run(trace)
    assert a.events == b.events
    assert np.array_equal(a.schedule().riro_corr_value_hz, b.schedule().riro_corr_value_hz)


def test_event_log_csv(trace):
    text = events_to_csv(_run(trace, te=(2.5, 5.5)).events)
    lines = text.splitlines()
    assert lines[0] == "slice,line,time_s,pressure,gz_hz_per_mm,moment_echo1,moment_echo2"
    assert len(lines) == 17


def test_pressure_trace_type_is_shared():
    assert isinstance(synth_pressure_trace(2.5, 3.0), PressureTrace)
