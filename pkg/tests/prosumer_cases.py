"""Aggregator scenarios embedded under small single-bus markets."""

from conftest import aggregator, gen, single_bus

MARKET = [gen("cheap", p_max=30.0, c_var=10.0), gen("peak", p_max=60.0, c_var=80.0)]


def three_hour_example(**kw):
    a = aggregator("A", [1, 1, 1], [0, 3, 0], e_max=5.0, **kw)
    return single_bus(3, MARKET, aggregators=[a])


def degenerate_split_example():
    a = aggregator("A", [1, 2, 2], [3, 0, 0], e_max=5.0)
    return single_bus(3, MARKET, aggregators=[a])


def indifference_fixture():
    """Hour-2 energy needs the expensive unit unless the battery covers it.

    The lower level is indifferent between discharging (-2, 0), (-1, -1) and
    (0, -2) over hours 1 and 2; the cheap unit can carry only 2 MW.
    """
    gens = [gen("C", p_max=2.0, c_var=1.0), gen("E", p_max=50.0, c_var=100.0)]
    a = aggregator("A", [1, 2, 2], [3, 0, 0], inflexible=[0, 2, 0], e_max=5.0)
    return single_bus(3, gens, aggregators=[a])


def embedding_cases():
    """(name, scenario) pairs; every one passes validation."""
    cases = [("three_hour", three_hour_example()), ("degenerate_split", degenerate_split_example()),
             ("indifference", indifference_fixture())]
    cases.append(("no_pv", single_bus(3, MARKET, aggregators=[
        aggregator("A", [2, 3, 1], [0, 0, 0], e_max=4.0)])))
    cases.append(("leaky", single_bus(4, MARKET, aggregators=[
        aggregator("A", [1, 1, 2, 2], [3, 2, 0, 0], e_max=6.0, retention=0.9)])))
    cases.append(("precharged", single_bus(3, MARKET, aggregators=[
        aggregator("A", [2, 2, 2], [0, 0, 0], e_max=5.0, e_initial=3.0)])))
    cases.append(("tight_power", single_bus(4, MARKET, aggregators=[
        aggregator("A", [0.5, 1, 3, 3], [2, 2.5, 0, 0], p_b_min=-1.5, p_b_max=1.5, e_max=10.0)])))
    cases.append(("energy_floor", single_bus(3, MARKET, aggregators=[
        aggregator("A", [1, 1, 1], [2, 0, 0], e_min=1.0, e_initial=1.0, e_max=3.0)])))
    cases.append(("disabled_battery", single_bus(2, MARKET, aggregators=[
        aggregator("A", [2, 1], [1, 0.5], p_b_min=0.0, p_b_max=0.0, e_max=0.0)])))
    cases.append(("two_aggregators", single_bus(4, MARKET, aggregators=[
        aggregator("A", [1, 1, 2, 2], [3, 0, 0, 0], e_max=5.0),
        aggregator("B", [2, 2, 1, 3], [0, 4, 1, 0], e_max=3.0, retention=0.95)])))
    cases.append(("long_day", single_bus(8, MARKET, aggregators=[
        aggregator("A", [1, 1, 1, 2, 2, 3, 3, 1], [0, 2, 4, 4, 2, 0, 0, 0],
                   p_b_min=-3.0, p_b_max=3.0, e_max=8.0, retention=0.98)])))
    cases.append(("full_at_start", single_bus(3, MARKET, aggregators=[
        aggregator("A", [0.5, 0.5, 3], [1, 0, 0], e_max=2.0, e_initial=1.5)])))
    return cases
