"""Exception types shared across the phx packages."""


class PhxError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


# --- playbook document errors ------------------------------------------------

class PlaybookSyntaxError(PhxError):
    code = "syntax-error"

    def __init__(self, message, line=0, column=0):
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column


class SchemaError(PhxError):
    code = "schema-error"

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}", path=path, reason=reason)
        self.path = path
        self.reason = reason


class DanglingReferenceError(PhxError):
    code = "reference-error"

    def __init__(self, path, ref):
        super().__init__(f"{path}: dangling reference {ref!r}", path=path, ref=ref)
        self.path = path
        self.ref = ref


class WorkflowCycleError(PhxError):
    code = "cycle-error"

    def __init__(self, cycle):
        super().__init__(
            "workflow cycle: " + " -> ".join(cycle), cycle=list(cycle)
        )
        self.cycle = list(cycle)


class VariableTypeError(PhxError):
    code = "type-error"

    def __init__(self, variable, expected, actual):
        super().__init__(
            f"variable {variable}: expected {expected}, got {actual}",
            variable=variable, expected=expected, actual=actual,
        )
        self.variable = variable
        self.expected = expected
        self.actual = actual


# --- condition language ------------------------------------------------------

class ConditionSyntaxError(PhxError):
    code = "condition-syntax-error"

    def __init__(self, position, expected, found=None):
        msg = f"position {position}: expected {expected}"
        if found:
            msg += f", found {found}"
        super().__init__(msg, position=position, expected=expected, found=found)
        self.position = position
        self.expected = expected
        self.found = found


class UnboundVariableError(PhxError):
    code = "unbound-variable"

    def __init__(self, name):
        super().__init__(f"unbound variable {name}", name=name)
        self.name = name


class TypeMismatchError(PhxError):
    code = "type-mismatch"

    def __init__(self, op, left_type, right_type):
        super().__init__(
            f"operator {op} cannot compare {left_type} with {right_type}",
            op=op, left_type=left_type, right_type=right_type,
        )
        self.op = op
        self.left_type = left_type
        self.right_type = right_type


# --- orchestration engine ----------------------------------------------------

class InvalidPlaybookError(PhxError):
    code = "invalid-playbook"

    def __init__(self, report):
        errors = [f.path for f in report.errors]
        super().__init__(f"playbook has validation errors: {errors}")
        self.report = report


class MissingExternalBindingError(PhxError):
    code = "missing-external-binding"

    def __init__(self, name):
        super().__init__(f"external variable {name} not bound", name=name)
        self.name = name


class BindingTypeError(PhxError):
    code = "binding-type-error"

    def __init__(self, name, reason):
        super().__init__(f"binding {name}: {reason}", name=name, reason=reason)
        self.name = name
        self.reason = reason


class HypotheticalInLiveModeError(PhxError):
    code = "hypothetical-in-live-mode"

    def __init__(self, target_id):
        super().__init__(
            f"target {target_id} is hypothetical and cannot run live",
            target_id=target_id,
        )
        self.target_id = target_id


class NotAwaitingApprovalError(PhxError):
    code = "not-awaiting-approval"

    def __init__(self, step_id):
        super().__init__(f"step {step_id} is not awaiting approval", step_id=step_id)
        self.step_id = step_id


class UnknownStepError(PhxError):
    code = "unknown-step"

    def __init__(self, step_id):
        super().__init__(f"unknown step {step_id}", step_id=step_id)
        self.step_id = step_id


class AlreadyTerminalError(PhxError):
    code = "already-terminal"

    def __init__(self, status):
        super().__init__(f"execution already terminal ({status})", status=status)
        self.status = status


class UnknownExecutionError(PhxError):
    code = "unknown-execution"

    def __init__(self, execution_id):
        super().__init__(f"unknown execution {execution_id}", execution_id=execution_id)
        self.execution_id = execution_id


# --- action dispatch ----------------------------------------------------------

class NoExecutorError(PhxError):
    code = "no-executor"

    def __init__(self, command_type, agent_type, mode):
        super().__init__(
            f"no executor for ({command_type}, {agent_type}, {mode})",
            command_type=command_type, agent_type=agent_type, mode=mode,
        )
        self.command_type = command_type
        self.agent_type = agent_type
        self.mode = mode


# --- risk model ----------------------------------------------------------------

class RiskModelError(PhxError):
    code = "risk-model-error"


class MissingLeafError(PhxError):
    code = "missing-leaf"

    def __init__(self, input_key):
        super().__init__(f"no value supplied for leaf {input_key}", input_key=input_key)
        self.input_key = input_key


class OutOfScaleError(PhxError):
    code = "out-of-scale"

    def __init__(self, input_key, symbol):
        super().__init__(
            f"value {symbol!r} is not on the scale of leaf {input_key}",
            input_key=input_key, symbol=symbol,
        )
        self.input_key = input_key
        self.symbol = symbol


# --- resilience range ----------------------------------------------------------

class ScenarioMismatchError(PhxError):
    code = "scenario-mismatch"

    def __init__(self, asset_ref):
        super().__init__(
            f"scenario references unknown asset {asset_ref}", asset_ref=asset_ref
        )
        self.asset_ref = asset_ref


class ScenarioError(PhxError):
    code = "scenario-error"


class MissingMeasurementError(PhxError):
    code = "missing-measurement"

    def __init__(self, service):
        super().__init__(f"no measurement for service {service}", service=service)
        self.service = service


# --- exchange -------------------------------------------------------------------

class IntegrityMismatchError(PhxError):
    code = "integrity-mismatch"

    def __init__(self, expected, actual):
        super().__init__(
            f"integrity hash mismatch: expected {expected}, got {actual}",
            expected=expected, actual=actual,
        )
        self.expected = expected
        self.actual = actual


class BundleKindError(PhxError):
    code = "bundle-kind-error"

    def __init__(self, kind, wanted):
        super().__init__(f"bundle kind {kind!r}, expected {wanted!r}", kind=kind, wanted=wanted)
        self.kind = kind
        self.wanted = wanted


class NonTerminalExecutionError(PhxError):
    code = "non-terminal-execution"

    def __init__(self, status):
        super().__init__(f"execution still {status}", status=status)
        self.status = status


class StorageError(PhxError):
    code = "storage-error"
