import random
import string
from concurrent.futures import ThreadPoolExecutor
from datetime import date

import pytest

from smsflow.experts import (
    CALL_US_REPLY,
    REFERRAL_ANSWER,
    AvailabilityStore,
    RoutingDecision,
    ScriptedRouterModel,
    ScriptedSchedulerModel,
    SlotCandidate,
    answer_store_question,
    forward_to_queue,
    parse_slot_line,
    route,
    schedule,
)
from smsflow.store import RunStore


@pytest.fixture()
def registrations(default_config):
    return default_config.experts


@pytest.fixture()
def documents(default_config):
    return default_config.documents


def test_medicine_complaint_routes_to_pharmacy_with_rephrasing(registrations):
    decision = route("bad taste of medicine", registrations, ScriptedRouterModel())
    assert decision.to_doc() == {
        "destination": "Pharmacy",
        "next_inputs": "I have a complaint about the bad taste of a medication.",
    }


def test_vaccine_reservation_routes_to_scheduling(registrations):
    decision = route(
        "I want to reserve a reservation for the flu vaccine", registrations, ScriptedRouterModel()
    )
    assert decision.destination == "Scheduling"
    assert decision.next_inputs == "I would like to reserve a reservation for the flu vaccine."


def test_cueless_item_falls_back_to_the_complaint_department(registrations):
    decision = route("qwerty asdf zxcv", registrations, ScriptedRouterModel())
    assert decision.destination == "ComplaintDepartment"


def test_route_requires_registrations():
    with pytest.raises(ValueError):
        route("anything", [], ScriptedRouterModel())


def test_route_is_total_over_random_text(registrations):
    rng = random.Random(7)
    qualifiers = {r.qualifier for r in registrations}
    for _ in range(100):
        text = " ".join(
            "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 8)))
            for _ in range(rng.randint(1, 10))
        )
        assert route(text, registrations, ScriptedRouterModel()).destination in qualifiers


def test_unregistered_model_choice_is_corrected_to_catch_all(registrations):
    class WildModel:
        def route(self, item_text, regs):
            return RoutingDecision(destination="Nonexistent", next_inputs=item_text)

    decision = route("anything", registrations, WildModel())
    assert decision.destination == "ComplaintDepartment"


def test_forward_to_queue_appends_verbatim(registrations):
    store = RunStore()
    decision = route("bad taste of medicine", registrations, ScriptedRouterModel())
    entry_id = forward_to_queue(store, "pharmacist", "A1001", decision)
    records = store.queue("pharmacist").read_all()
    assert records[entry_id]["next_inputs"] == decision.next_inputs
    assert records[entry_id]["destination"] == "Pharmacy"


def test_two_forwards_get_distinct_entry_ids(registrations):
    store = RunStore()
    decision = RoutingDecision("ComplaintDepartment", "I have a complaint about the service.")
    first = forward_to_queue(store, "customer-support", "A1001", decision)
    second = forward_to_queue(store, "customer-support", "A1001", decision)
    assert first != second
    assert len(store.queue("customer-support").read_all()) == 2


def test_holiday_hours_question_finds_the_holiday_document(documents):
    answer = answer_store_question("what are your holiday hours", documents)
    assert answer == "On public holidays we are open 10am to 4pm."


def test_exact_document_question_answers_itself(documents):
    for doc in documents:
        assert answer_store_question(doc.question, documents) == doc.answer


def test_gibberish_question_gets_the_referral_answer(documents):
    assert answer_store_question("xyzzy frobnicate", documents) == REFERRAL_ANSWER


def test_empty_store_gets_the_referral_answer():
    assert answer_store_question("where are you located", []) == REFERRAL_ANSWER


def test_slot_line_round_trip():
    slot = SlotCandidate(2025, 6, 29, 10)
    assert slot.line() == "year: 2025, month: 6, day: 29, hours: 10"
    assert parse_slot_line(slot.line()) == slot


def test_malformed_slot_lines_rejected():
    with pytest.raises(ValueError):
        parse_slot_line("year 2025 month 6")
    with pytest.raises(ValueError):
        parse_slot_line("year: 2025, month: 13, day: 1, hours: 10")
    with pytest.raises(ValueError):
        SlotCandidate(2025, 2, 30, 10)
    with pytest.raises(ValueError):
        SlotCandidate(2025, 2, 3, 24)


def test_scheduler_parses_dates_and_dayparts():
    model = ScriptedSchedulerModel()
    lines = model.propose(
        "I want an appointment on Saturday 03/22/2025 afternoon or Sunday 03/23/2025 morning",
        reference_date=date(2025, 1, 1),
    )
    slots = [parse_slot_line(l) for l in lines]
    assert slots[0] == SlotCandidate(2025, 3, 22, 13)
    assert SlotCandidate(2025, 3, 23, 9) in slots
    assert all(13 <= s.hours <= 17 for s in slots if s.day == 22)
    assert all(9 <= s.hours <= 12 for s in slots if s.day == 23)


def test_scheduler_resolves_bare_weekdays_against_the_reference_date():
    model = ScriptedSchedulerModel()
    lines = model.propose("next Monday morning", reference_date=date(2025, 1, 1))  # a Wednesday
    slots = [parse_slot_line(l) for l in lines]
    assert slots and all(s.year == 2025 and s.month == 1 and s.day == 6 for s in slots)


def test_schedule_books_the_first_candidate_with_capacity():
    availability = AvailabilityStore({SlotCandidate(2025, 3, 22, 15): 3})
    result = schedule(
        "Saturday 03/22/2025 afternoon or Sunday 03/23/2025 morning",
        availability,
        ScriptedSchedulerModel(),
        reference_date=date(2025, 1, 1),
    )
    assert result.booked == SlotCandidate(2025, 3, 22, 15)
    assert availability.capacity(SlotCandidate(2025, 3, 22, 15)) == 2
    assert "Saturday, March 22, 2025, at 3 PM" in result.reply


def test_schedule_without_capacity_returns_call_us():
    availability = AvailabilityStore({})
    result = schedule(
        "03/22/2025 morning", availability, ScriptedSchedulerModel(), reference_date=date(2025, 1, 1)
    )
    assert result.booked is None and result.reply == CALL_US_REPLY


def test_schedule_without_date_constraints_proposes_nothing():
    availability = AvailabilityStore({SlotCandidate(2025, 3, 22, 15): 1})
    result = schedule(
        "I want to reserve a reservation for the flu vaccine",
        availability,
        ScriptedSchedulerModel(),
        reference_date=date(2025, 1, 1),
    )
    assert result.candidates == [] and result.booked is None
    assert availability.total_capacity() == 1


def test_malformed_candidate_lines_are_skipped_with_a_warning():
    class SloppyModel:
        def propose(self, text, reference_date):
            return ["year: 2025, month: 2, day: 30, hours: 9", "not a slot",
                    "year: 2025, month: 3, day: 22, hours: 15"]

    availability = AvailabilityStore({SlotCandidate(2025, 3, 22, 15): 1})
    result = schedule("whatever", availability, SloppyModel(), reference_date=date(2025, 1, 1))
    assert result.booked == SlotCandidate(2025, 3, 22, 15)
    assert len(result.warnings) == 2


def test_booking_is_grounded_in_proposed_candidates():
    rng = random.Random(19)
    model = ScriptedSchedulerModel()
    for _ in range(100):
        month = rng.randint(1, 12)
        day = rng.randint(1, 28)
        request = f"{month:02d}/{day:02d}/2025 {'morning' if rng.random() < 0.5 else 'afternoon'}"
        slots = {
            SlotCandidate(2025, rng.randint(1, 12), rng.randint(1, 28), rng.randint(8, 18)): rng.randint(0, 2)
            for _ in range(rng.randint(0, 6))
        }
        availability = AvailabilityStore(dict(slots))
        before = availability.total_capacity()
        result = schedule(request, availability, model, reference_date=date(2025, 1, 1))
        if result.booked is not None:
            assert result.booked in result.candidates
            assert availability.total_capacity() == before - 1
        else:
            assert availability.total_capacity() == before


def test_concurrent_bookings_of_a_single_slot_book_exactly_once():
    slot = SlotCandidate(2025, 3, 22, 15)
    availability = AvailabilityStore({slot: 1})
    with ThreadPoolExecutor(max_workers=16) as pool:
        results = list(pool.map(lambda _: availability.book(slot), range(64)))
    assert sum(results) == 1
    assert availability.capacity(slot) == 0


def test_negative_capacity_rejected():
    with pytest.raises(ValueError):
        AvailabilityStore({SlotCandidate(2025, 1, 1, 9): -1})
