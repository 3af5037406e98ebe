"""Deterministic playbook execution.

One execution is a single logical state machine. Simulated modes (dry-run,
range) run on a discrete-event clock driven by executor-reported durations;
every continuation passes through a priority queue keyed
(time, step-instance-key, insertion-seq), which makes parallel-branch
interleaving a total order and the whole run reproducible from the seed.

Subgraph scoping: parallel branches, if/switch arms, and while bodies are
frames; an ``end`` step terminates the innermost frame, and only the root
frame's end completes the execution.
"""

import heapq
import secrets
import threading
import time as _time
import uuid

from ..dispatch import DEFAULT_REGISTRY, DispatchContext, SimulationProfile
from ..errors import (
    AlreadyTerminalError,
    BindingTypeError,
    HypotheticalInLiveModeError,
    InvalidPlaybookError,
    MissingExternalBindingError,
    NotAwaitingApprovalError,
    PhxError,
    UnboundVariableError,
    UnknownExecutionError,
    UnknownStepError,
)
from ..model.conditions import evaluate_condition, parse_condition
from ..model.parsing import canonical_hash
from ..model.types import check_variable_value, coerce_variable_value, render_value
from ..model.validation import reachable_from, validate
from ..rng import derive_child_seed, substream
from ..timeutil import now_ms
from .interpolate import interpolate
from .records import (
    EventKind,
    ExecStatus,
    ExecutionEvent,
    ExecutionRecord,
    StepRecord,
    StepStatus,
)

SIM_MODES = ("dry-run", "range")
MODES = ("live",) + SIM_MODES

AUTO_OPERATOR = "range-auto"


class _Frame:
    """A running subgraph scope; ``end`` steps call back into on_done."""

    __slots__ = ("suffix", "iteration", "alive", "parent", "on_done")

    def __init__(self, on_done, suffix="", iteration=0, parent=None):
        self.on_done = on_done
        self.suffix = suffix
        self.iteration = iteration
        self.alive = True
        self.parent = parent

    def is_alive(self):
        frame = self
        while frame is not None:
            if not frame.alive:
                return False
            frame = frame.parent
        return True

    def kill(self):
        self.alive = False


class _ExecState:
    def __init__(self, engine, playbook, record, ctx, auto_approve):
        self.engine = engine
        self.playbook = playbook
        self.record = record
        self.ctx = ctx
        self.auto_approve = auto_approve
        self.steps = playbook.steps()
        self.agents = playbook.agents()
        self.targets = playbook.targets()
        self.successors = {
            sid: [target for _, target in step.successor_edges()]
            for sid, step in playbook.workflow
        }
        self.t = record.started_at or 0.0
        self.heap = []
        self.task_seq = 0
        self.event_seq = 0
        self.last_ts = self.t
        self.parked = {}             # instance key -> parked manual step info
        self.children_awaiting = {}  # instance key -> child _ExecState
        self.child_states = []       # (frame, child _ExecState)
        self.stream_seed = record.seed if record.seed is not None else secrets.randbits(64)
        self.streams = {}

    # -- scheduling ---------------------------------------------------------

    def schedule(self, t, order_key, frame, fn):
        self.task_seq += 1
        heapq.heappush(self.heap, (t, order_key, self.task_seq, fn, frame))

    def stream_for(self, instance_key):
        if instance_key not in self.streams:
            self.streams[instance_key] = substream(self.stream_seed, instance_key)
        return self.streams[instance_key]

    def emit(self, kind, t, payload):
        t = max(t, self.last_ts)
        self.last_ts = t
        self.event_seq += 1
        event = ExecutionEvent(self.event_seq, t, kind.value, payload)
        self.record.events.append(event)
        if self.engine.event_sink is not None:
            self.engine.event_sink(self.record, event)
        return event

    def has_pending_input(self):
        if any(info["frame"].is_alive() for info in self.parked.values()):
            return True
        return bool(self.children_awaiting)


class Engine:
    """Owns executions; all public methods are serialized and thread-safe."""

    def __init__(self, registry=None, playbook_resolver=None, profile=None,
                 event_sink=None, organisation="phx", exchange_hub=None,
                 auto_approve_manual=None):
        self.registry = registry or DEFAULT_REGISTRY
        self.playbook_resolver = playbook_resolver
        self.profile = profile or SimulationProfile()
        self.event_sink = event_sink
        self.organisation = organisation
        self.exchange_hub = exchange_hub
        self.auto_approve_manual = auto_approve_manual
        self.executions = {}
        self._lock = threading.RLock()

    # -- public operations ---------------------------------------------------

    def start_execution(self, playbook, external_bindings=None, mode="dry-run",
                        seed=None, *, start_at_ms=0.0, metadata=None,
                        range_hook=None, execution_id=None) -> ExecutionRecord:
        with self._lock:
            state = self._create_execution(
                playbook, external_bindings or {}, mode, seed,
                t0=start_at_ms, metadata=metadata, range_hook=range_hook,
                execution_id=execution_id,
            )
            return state.record

    def advance(self, execution) -> ExecutionRecord:
        with self._lock:
            state = self._state_of(execution)
            self._drain(state)
            return state.record

    def run_to_completion(self, execution) -> ExecutionRecord:
        """advance() until the execution blocks on input or terminates."""
        return self.advance(execution)

    def approve_manual_step(self, execution, step_id, decision, operator,
                            note=None) -> ExecutionRecord:
        if decision not in ("approve", "deny"):
            raise ValueError(f"decision must be approve or deny, got {decision!r}")
        with self._lock:
            state = self._state_of(execution)
            if step_id not in state.steps:
                raise UnknownStepError(step_id)
            candidates = sorted(
                inst for inst, info in state.parked.items()
                if info["step"].id == step_id and info["frame"].is_alive()
            )
            if not candidates:
                raise NotAwaitingApprovalError(step_id)
            inst = candidates[0]
            info = state.parked.pop(inst)
            step, rec, frame = info["step"], info["record"], info["frame"]
            t = info["parked_at"] if state.record.mode in SIM_MODES else now_ms()
            payload = {
                "step_id": step_id, "iteration": rec.iteration,
                "operator": operator, "note": note,
            }
            if decision == "approve":
                state.emit(EventKind.APPROVAL_GRANTED, t, payload)
                self._step_succeeded(state, step, inst, rec, frame, t)
            else:
                state.emit(EventKind.APPROVAL_DENIED, t, payload)
                self._step_failed(state, step, inst, rec, frame, t,
                                  "manual step denied", timed_out=False)
            if state.record.status == ExecStatus.AWAITING_INPUT.value:
                state.record.status = ExecStatus.RUNNING.value
            self._drain(state)
            return state.record

    def cancel_execution(self, execution, reason="cancelled") -> ExecutionRecord:
        with self._lock:
            state = self._state_of(execution)
            if state.record.terminal:
                raise AlreadyTerminalError(state.record.status)
            self._cancel_state(state, reason)
            return state.record

    def pause_execution(self, execution) -> ExecutionRecord:
        with self._lock:
            state = self._state_of(execution)
            if state.record.terminal:
                raise AlreadyTerminalError(state.record.status)
            state.record.status = ExecStatus.PAUSED.value
            return state.record

    def resume_execution(self, execution) -> ExecutionRecord:
        with self._lock:
            state = self._state_of(execution)
            if state.record.terminal:
                raise AlreadyTerminalError(state.record.status)
            if state.record.status == ExecStatus.PAUSED.value:
                state.record.status = ExecStatus.RUNNING.value
                self._drain(state)
            return state.record

    def get_record(self, execution_id) -> ExecutionRecord:
        with self._lock:
            return self._state_of(execution_id).record

    # -- construction ----------------------------------------------------------

    def _state_of(self, execution) -> _ExecState:
        execution_id = getattr(execution, "execution_id", execution)
        state = self.executions.get(execution_id)
        if state is None:
            raise UnknownExecutionError(execution_id)
        return state

    def _create_execution(self, playbook, external_bindings, mode, seed, *,
                          t0, metadata=None, range_hook=None, parent=None,
                          execution_id=None) -> _ExecState:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        report = validate(playbook)
        if not report.executable:
            raise InvalidPlaybookError(report)

        variables = playbook.variables()
        for name, value in external_bindings.items():
            variable = variables.get(name)
            if variable is None:
                raise BindingTypeError(name, "not a declared variable")
            if not variable.external:
                raise BindingTypeError(name, "not an external variable")
            reason = check_variable_value(variable.var_type, value)
            if reason is not None:
                raise BindingTypeError(name, reason)
        for name, variable in playbook.playbook_variables:
            if variable.external and name not in external_bindings:
                raise MissingExternalBindingError(name)

        if mode == "live":
            for tid, target in playbook.target_definitions:
                if target.hypothetical:
                    raise HypotheticalInLiveModeError(tid)
            start_t = now_ms()
        else:
            if seed is None:
                seed = secrets.randbits(64)
            start_t = float(t0)

        bindings = {}
        for name, variable in playbook.playbook_variables:
            if variable.value is not None:
                bindings[name] = coerce_variable_value(variable.var_type, variable.value)
        for name, value in external_bindings.items():
            bindings[name] = coerce_variable_value(variables[name].var_type, value)

        record = ExecutionRecord(
            execution_id=execution_id or ("exec--" + str(uuid.uuid4())),
            playbook_id=playbook.id,
            canonical_hash=canonical_hash(playbook),
            mode=mode,
            status=ExecStatus.RUNNING.value,
            bindings=bindings,
            started_at=start_t,
            seed=seed if mode in SIM_MODES else None,
            external_bindings=dict(external_bindings),
        )
        ctx = DispatchContext(
            mode=mode,
            profile=self.profile,
            organisation=self.organisation,
            severity=playbook.severity,
            hub=self.exchange_hub,
        )
        auto = self.auto_approve_manual
        if auto is None:
            auto = mode == "range"
        state = _ExecState(self, playbook, record, ctx, auto)
        state.range_hook = range_hook
        if parent is not None:
            parent_state, parent_inst = parent
            record.parent_execution_id = parent_state.record.execution_id
            state.parent = (parent_state, parent_inst)
        else:
            state.parent = None
        self.executions[record.execution_id] = state

        payload = {
            "playbook_id": playbook.id,
            "canonical_hash": record.canonical_hash,
            "mode": mode,
            "seed": record.seed,
        }
        if metadata:
            payload["metadata"] = metadata
        state.emit(EventKind.EXECUTION_STARTED, start_t, payload)
        state.root_frame = _Frame(self._make_root_done(state))
        self._enter_step(state, playbook.workflow_start, state.root_frame, start_t)
        return state

    # -- terminal transitions -----------------------------------------------------

    def _make_root_done(self, state):
        def on_done(ok, t, reason=None):
            if state.record.terminal:
                return
            state.record.ended_at = t
            state.heap.clear()
            if ok:
                state.record.status = ExecStatus.COMPLETED.value
                state.emit(EventKind.EXECUTION_COMPLETED, t, {})
            else:
                state.record.status = ExecStatus.FAILED.value
                state.record.failure_reason = reason
                state.emit(EventKind.EXECUTION_FAILED, t, {"reason": reason})
            self._notify_parent(state)
        return on_done

    def _notify_parent(self, state):
        if state.parent is None:
            return
        parent_state, inst = state.parent
        parent_state.children_awaiting.pop(inst, None)
        handler = getattr(state, "parent_resume", None)
        if handler is not None:
            handler()

    def _cancel_state(self, state, reason):
        t = state.t if state.record.mode in SIM_MODES else now_ms()
        cancelled_steps = sorted(
            inst for inst, rec in state.record.step_records.items()
            if rec.status in (StepStatus.RUNNING.value, StepStatus.AWAITING_APPROVAL.value)
        )
        state.heap.clear()
        state.parked.clear()
        state.record.status = ExecStatus.CANCELLED.value
        state.record.ended_at = t
        state.record.failure_reason = reason
        state.emit(EventKind.EXECUTION_CANCELLED, t,
                   {"reason": reason, "cancelled_steps": cancelled_steps})
        for frame, child in state.child_states:
            if not child.record.terminal:
                self._cancel_state(child, "parent execution cancelled")
        state.children_awaiting.clear()
        self._notify_parent(state)

    # -- scheduler loop --------------------------------------------------------------

    def _drain(self, state):
        live = state.record.mode == "live"
        while state.record.status == ExecStatus.RUNNING.value and state.heap:
            t, _key, _seq, fn, frame = heapq.heappop(state.heap)
            if frame is not None and not frame.is_alive():
                continue
            if live:
                wait_s = (t - now_ms()) / 1000.0
                if wait_s > 0:
                    _time.sleep(wait_s)
                t = max(t, now_ms())
            state.t = max(state.t, t)
            fn(state.t if live else t)
        if state.record.status == ExecStatus.RUNNING.value and not state.heap:
            if state.has_pending_input():
                state.record.status = ExecStatus.AWAITING_INPUT.value

    # -- step machinery -----------------------------------------------------------------

    def _enter_step(self, state, step_id, frame, t):
        if not frame.is_alive() or state.record.terminal:
            return
        step = state.steps[step_id]
        if step.type == "end":
            frame.on_done(True, t)
            return
        if step.type == "start":
            self._enter_step(state, step.on_completion, frame, t)
            return
        inst = step_id + frame.suffix
        rec = StepRecord(
            step_id=step_id, iteration=frame.iteration,
            status=StepStatus.RUNNING.value, entered_at=t,
        )
        state.record.step_records[inst] = rec
        state.emit(EventKind.STEP_ENTERED, t, {
            "step_id": step_id, "step_type": step.type, "iteration": frame.iteration,
        })
        handler = {
            "action": self._process_action,
            "manual": self._process_manual,
            "parallel": self._process_parallel,
            "if-condition": self._process_if,
            "while-condition": self._process_while,
            "switch": self._process_switch,
            "playbook-action": self._process_playbook_action,
        }[step.type]
        state.schedule(t, inst, frame,
                       lambda t2, h=handler: h(state, step, inst, rec, frame, t2))

    def _step_succeeded(self, state, step, inst, rec, frame, t, payload_extra=None):
        rec.status = StepStatus.SUCCEEDED.value
        rec.exited_at = t
        payload = {"step_id": step.id, "iteration": rec.iteration}
        if payload_extra:
            payload.update(payload_extra)
        state.emit(EventKind.STEP_SUCCEEDED, t, payload)
        nxt = step.on_success if step.type in ("action", "manual", "playbook-action") else step.on_completion
        if nxt is None:
            frame.on_done(True, t)
        else:
            state.schedule(t, inst, frame,
                           lambda t2: self._enter_step(state, nxt, frame, t2))

    def _step_failed(self, state, step, inst, rec, frame, t, reason, timed_out):
        rec.status = StepStatus.TIMED_OUT.value if timed_out else StepStatus.FAILED.value
        rec.exited_at = t
        rec.failure_reason = reason
        kind = EventKind.STEP_TIMED_OUT if timed_out else EventKind.STEP_FAILED
        state.emit(kind, t, {"step_id": step.id, "iteration": rec.iteration, "reason": reason})
        if step.on_failure is not None:
            state.schedule(t, inst, frame,
                           lambda t2: self._enter_step(state, step.on_failure, frame, t2))
        else:
            frame.on_done(False, t, reason)

    def _set_binding(self, state, name, value, step_id, t):
        overwrote = name in state.record.bindings
        state.record.bindings[name] = value
        payload_value = list(value) if isinstance(value, tuple) else value
        state.emit(EventKind.VARIABLE_SET, t, {
            "name": name, "value": payload_value, "step_id": step_id,
            "overwrote": overwrote,
        })

    def _mark_skipped(self, state, step_ids, frame):
        for sid in sorted(step_ids):
            step = state.steps[sid]
            if step.type in ("start", "end"):
                continue
            inst = sid + frame.suffix
            if inst not in state.record.step_records:
                state.record.step_records[inst] = StepRecord(
                    step_id=sid, iteration=frame.iteration,
                    status=StepStatus.SKIPPED.value,
                )

    def _untaken_sets(self, state, taken, untaken_entries, continuation):
        keep = reachable_from(state.successors, taken) if taken else set()
        if continuation:
            keep |= reachable_from(state.successors, continuation)
        skipped = set()
        for entry in untaken_entries:
            skipped |= reachable_from(state.successors, entry)
        return skipped - keep

    # -- action steps ----------------------------------------------------------------------

    def _process_action(self, state, step, inst, rec, frame, t):
        self._start_attempt(state, step, inst, rec, frame, t + step.delay_ms)

    def _start_attempt(self, state, step, inst, rec, frame, t):
        rec.attempts += 1
        deadline = t + step.timeout_ms
        state.schedule(t, inst, frame,
                       lambda t2: self._run_command(state, step, inst, rec, frame, 0, t2, deadline))

    def _run_command(self, state, step, inst, rec, frame, index, t, deadline):
        command = step.commands[index]
        try:
            content = interpolate(command.content, state.record.bindings)
        except UnboundVariableError as exc:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"unbound variable {exc.name} in command content", timed_out=False)
            return
        state.emit(EventKind.COMMAND_DISPATCHED, t, {
            "step_id": step.id, "iteration": rec.iteration, "index": index,
            "command_type": command.command_type, "content": content,
        })
        agent = state.agents.get(step.agent)
        targets = [state.targets[tid] for tid in step.targets]
        stream = state.stream_for(inst)
        try:
            result = self.registry.dispatch(
                command, agent, targets, content, state.ctx, stream, t,
            )
        except PhxError as exc:
            # engine-internal faults bypass on_failure routing entirely
            state.root_frame.on_done(False, t, f"dispatch fault: {exc.message}")
            return
        finish = t + result.duration_ms
        if finish > deadline:
            state.schedule(deadline, inst, frame,
                           lambda t2: self._finish_command(
                               state, step, inst, rec, frame, index, command,
                               content, result, t2, deadline, timed_out=True))
        else:
            state.schedule(finish, inst, frame,
                           lambda t2: self._finish_command(
                               state, step, inst, rec, frame, index, command,
                               content, result, t2, deadline, timed_out=False))

    def _finish_command(self, state, step, inst, rec, frame, index, command,
                        content, result, t, deadline, timed_out):
        payload = {
            "step_id": step.id, "iteration": rec.iteration, "index": index,
            "command_type": command.command_type,
            "status": "failure" if timed_out else result.status,
            "duration_ms": result.duration_ms,
            "detail": "timeout" if timed_out else result.detail,
        }
        success = result.ok and not timed_out
        if success and state.range_hook is not None:
            restored = state.range_hook(content, step.targets, t)
            if restored:
                payload["restored_assets"] = sorted(restored)
        state.emit(EventKind.COMMAND_COMPLETED, t, payload)
        if success:
            for name in sorted(result.outputs):
                value = result.outputs[name]
                rec.outputs[name] = value
                self._set_binding(state, name, value, step.id, t)
            if "__bundle_id__" in result.outputs:
                state.emit(EventKind.NOTIFICATION_EMITTED, t, {
                    "step_id": step.id, "bundle_id": result.outputs["__bundle_id__"],
                    "subject": content,
                })
            if index + 1 < len(step.commands):
                state.schedule(t, inst, frame,
                               lambda t2: self._run_command(state, step, inst, rec,
                                                            frame, index + 1, t2, deadline))
            else:
                self._step_succeeded(state, step, inst, rec, frame, t)
            return
        reason = "command timeout" if timed_out else (result.detail or "command failed")
        if rec.attempts <= step.retries:
            self._start_attempt(state, step, inst, rec, frame, t)
        else:
            self._step_failed(state, step, inst, rec, frame, t, reason, timed_out)

    # -- manual steps -------------------------------------------------------------------------

    def _process_manual(self, state, step, inst, rec, frame, t):
        state.emit(EventKind.APPROVAL_REQUESTED, t, {
            "step_id": step.id, "iteration": rec.iteration,
            "instruction": step.instruction,
        })
        if state.auto_approve:
            state.emit(EventKind.APPROVAL_GRANTED, t, {
                "step_id": step.id, "iteration": rec.iteration,
                "operator": AUTO_OPERATOR, "note": None,
            })
            self._step_succeeded(state, step, inst, rec, frame, t)
            return
        rec.status = StepStatus.AWAITING_APPROVAL.value
        state.parked[inst] = {
            "step": step, "record": rec, "frame": frame, "parked_at": t,
        }

    # -- branching steps -------------------------------------------------------------------------

    def _eval_condition(self, state, step, inst, rec, frame, t):
        try:
            expr = parse_condition(step.condition)
            return evaluate_condition(expr, state.record.bindings)
        except PhxError as exc:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"condition error: {exc.message}", timed_out=False)
            return None

    def _process_if(self, state, step, inst, rec, frame, t):
        outcome = self._eval_condition(state, step, inst, rec, frame, t)
        if outcome is None:
            return
        taken = step.on_true if outcome else step.on_false
        untaken = step.on_false if outcome else step.on_true
        if untaken is not None:
            self._mark_skipped(
                state,
                self._untaken_sets(state, taken, [untaken], step.on_completion),
                frame,
            )

        def arm_done(ok, t2, reason=None):
            if not ok:
                self._step_failed(state, step, inst, rec, frame, t2,
                                  reason or "branch failed", timed_out=False)
                return
            self._step_succeeded(state, step, inst, rec, frame, t2,
                                 {"condition_result": outcome})

        if taken is None:
            self._step_succeeded(state, step, inst, rec, frame, t,
                                 {"condition_result": outcome})
            return
        arm = _Frame(arm_done, suffix=frame.suffix, iteration=frame.iteration, parent=frame)
        state.schedule(t, taken + frame.suffix, arm,
                       lambda t2: self._enter_step(state, taken, arm, t2))

    def _process_while(self, state, step, inst, rec, frame, t):
        self._while_iterate(state, step, inst, rec, frame, 0, t)

    def _while_iterate(self, state, step, inst, rec, frame, k, t):
        outcome = self._eval_condition(state, step, inst, rec, frame, t)
        if outcome is None:
            return
        if not outcome:
            self._set_binding(state, "__loop_exhausted__", False, step.id, t)
            self._step_succeeded(state, step, inst, rec, frame, t, {"iterations": k})
            return
        if k >= step.max_iterations:
            self._set_binding(state, "__loop_exhausted__", True, step.id, t)
            rec.status = StepStatus.TIMED_OUT.value
            rec.exited_at = t
            state.emit(EventKind.STEP_TIMED_OUT, t, {
                "step_id": step.id, "iteration": rec.iteration,
                "reason": f"loop bound {step.max_iterations} exhausted",
            })
            if step.on_completion is None:
                frame.on_done(True, t)
            else:
                state.schedule(t, inst, frame,
                               lambda t2: self._enter_step(state, step.on_completion, frame, t2))
            return

        def body_done(ok, t2, reason=None):
            if not ok:
                self._step_failed(state, step, inst, rec, frame, t2,
                                  reason or "loop body failed", timed_out=False)
                return
            state.schedule(t2, inst, frame,
                           lambda t3: self._while_iterate(state, step, inst, rec, frame, k + 1, t3))

        body = _Frame(body_done, suffix=f"{frame.suffix}#{k}", iteration=k, parent=frame)
        state.schedule(t, step.body + body.suffix, body,
                       lambda t2: self._enter_step(state, step.body, body, t2))

    def _process_switch(self, state, step, inst, rec, frame, t):
        if step.variable not in state.record.bindings:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"switch variable {step.variable} unbound", timed_out=False)
            return
        rendered = render_value(state.record.bindings[step.variable])
        cases = step.case_map()
        taken = cases.get(rendered, step.default)
        if taken is None:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"no case matches {rendered!r} and no default", timed_out=False)
            return
        untaken = [target for literal, target in step.cases if target != taken]
        if step.default is not None and step.default != taken:
            untaken.append(step.default)
        self._mark_skipped(
            state, self._untaken_sets(state, taken, untaken, step.on_completion), frame,
        )

        def case_done(ok, t2, reason=None):
            if not ok:
                self._step_failed(state, step, inst, rec, frame, t2,
                                  reason or "case failed", timed_out=False)
                return
            self._step_succeeded(state, step, inst, rec, frame, t2, {"matched": rendered})

        arm = _Frame(case_done, suffix=frame.suffix, iteration=frame.iteration, parent=frame)
        state.schedule(t, taken + frame.suffix, arm,
                       lambda t2: self._enter_step(state, taken, arm, t2))

    def _process_parallel(self, state, step, inst, rec, frame, t):
        join = {"remaining": len(step.branches), "failed": False}
        branch_frames = {}

        def make_branch_done(branch_id):
            def branch_done(ok, t2, reason=None):
                if join["failed"] or state.record.terminal:
                    return
                if ok:
                    join["remaining"] -= 1
                    if join["remaining"] == 0:
                        self._step_succeeded(state, step, inst, rec, frame, t2)
                    return
                join["failed"] = True
                for other_id, other_frame in branch_frames.items():
                    if other_id != branch_id:
                        other_frame.kill()
                for parked_inst in [k for k, v in state.parked.items()
                                    if not v["frame"].is_alive()]:
                    del state.parked[parked_inst]
                for child_frame, child in state.child_states:
                    if not child_frame.is_alive() and not child.record.terminal:
                        self._cancel_state(child, "parallel sibling failed")
                self._step_failed(
                    state, step, inst, rec, frame, t2,
                    f"branch {branch_id} failed: {reason}", timed_out=False,
                )
            return branch_done

        for branch_id in step.branches:
            branch = _Frame(make_branch_done(branch_id), suffix=frame.suffix,
                            iteration=frame.iteration, parent=frame)
            branch_frames[branch_id] = branch
            state.schedule(t, branch_id + frame.suffix, branch,
                           lambda t2, b=branch_id, bf=branch: self._enter_step(state, b, bf, t2))

    # -- nested playbooks ----------------------------------------------------------------------------

    def _process_playbook_action(self, state, step, inst, rec, frame, t):
        if self.playbook_resolver is None:
            self._step_failed(state, step, inst, rec, frame, t,
                              "no playbook resolver configured", timed_out=False)
            return
        child_playbook = self.playbook_resolver(step.playbook_id)
        if child_playbook is None:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"unknown playbook {step.playbook_id}", timed_out=False)
            return
        child_bindings = {}
        for callee, caller in step.binding_map:
            if caller not in state.record.bindings:
                self._step_failed(state, step, inst, rec, frame, t,
                                  f"binding source {caller} unbound", timed_out=False)
                return
            child_bindings[callee] = state.record.bindings[caller]
        child_seed = None
        if state.record.seed is not None:
            child_seed = derive_child_seed(state.record.seed, step.id)
        try:
            child = self._create_execution(
                child_playbook, child_bindings, state.record.mode, child_seed,
                t0=t, range_hook=state.range_hook, parent=(state, inst),
            )
        except PhxError as exc:
            self._step_failed(state, step, inst, rec, frame, t,
                              f"child launch failed: {exc.message}", timed_out=False)
            return
        rec.outputs["__child_execution__"] = child.record.execution_id
        state.child_states.append((frame, child))

        def resume_parent():
            if state.record.terminal:
                return
            status = child.record.status
            t_end = child.record.ended_at if child.record.ended_at is not None else state.t
            if status == ExecStatus.COMPLETED.value:
                state.schedule(t_end, inst, frame,
                               lambda t2: self._step_succeeded(state, step, inst, rec, frame, t2))
            else:
                reason = f"child execution {status}"
                if child.record.failure_reason:
                    reason += f": {child.record.failure_reason}"
                state.schedule(t_end, inst, frame,
                               lambda t2: self._step_failed(state, step, inst, rec, frame,
                                                            t2, reason, timed_out=False))
            if state.record.status == ExecStatus.AWAITING_INPUT.value:
                state.record.status = ExecStatus.RUNNING.value
            self._drain(state)

        child.parent_resume = resume_parent
        self._drain(child)
        if not child.record.terminal:
            state.children_awaiting[inst] = child
