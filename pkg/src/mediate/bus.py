"""In-process service bus with three endpoint kinds: mock, http, human task.

Every binding's endpoints must be registered before an instance starts. The
bus keeps an invocation log that tests and run reports read back.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable

from .errors import EndpointFault, OrchestrationError
from .matching import (
    ENDPOINT_HTTP,
    ENDPOINT_HUMAN,
    ENDPOINT_MOCK,
    OperationRef,
    ServiceDescriptor,
)


class HumanTaskPending(Exception):
    """Internal signal: the invocation needs a human; the engine pauses."""


@dataclass(frozen=True)
class Invocation:
    service_id: str
    operation_id: str
    payload: dict[str, Any]


@dataclass
class _Registered:
    kind: str
    handler: Callable[[dict[str, Any]], dict[str, Any]] | None = None
    url: str | None = None
    fault: bool = False


class ServiceBus:
    def __init__(self, http_timeout: float = 10.0):
        self._endpoints: dict[str, _Registered] = {}
        self._log: list[Invocation] = []
        self._lock = threading.Lock()
        self._http_timeout = http_timeout

    # -- registration ---------------------------------------------------------

    def register_mock(self, service_id: str,
                      handler: Callable[[dict[str, Any]], dict[str, Any]] | dict[str, Any] | None = None,
                      *, fault: bool = False) -> None:
        if handler is None or isinstance(handler, dict):
            static = dict(handler or {})

            def handler(payload, _static=static):  # noqa: F811 - intentional rebind
                return dict(_static)

        self._endpoints[service_id] = _Registered(kind=ENDPOINT_MOCK, handler=handler, fault=fault)

    def register_http(self, service_id: str, url: str) -> None:
        self._endpoints[service_id] = _Registered(kind=ENDPOINT_HTTP, url=url)

    def register_human(self, service_id: str) -> None:
        self._endpoints[service_id] = _Registered(kind=ENDPOINT_HUMAN)

    def register_service(self, svc: ServiceDescriptor) -> None:
        ep = svc.endpoint
        if ep.kind == ENDPOINT_MOCK:
            self.register_mock(svc.id, ep.outputs, fault=ep.fault)
        elif ep.kind == ENDPOINT_HTTP:
            if not ep.url:
                raise OrchestrationError(f"service {svc.id!r} has no endpoint url")
            self.register_http(svc.id, ep.url)
        elif ep.kind == ENDPOINT_HUMAN:
            self.register_human(svc.id)
        else:
            raise OrchestrationError(f"service {svc.id!r} has unknown endpoint kind {ep.kind!r}")

    def is_registered(self, service_id: str) -> bool:
        return service_id in self._endpoints

    def is_human(self, service_id: str) -> bool:
        ep = self._endpoints.get(service_id)
        return ep is not None and ep.kind == ENDPOINT_HUMAN

    def set_fault(self, service_id: str, fault: bool = True) -> None:
        ep = self._endpoints.get(service_id)
        if ep is None:
            raise OrchestrationError(f"service {service_id!r} is not registered")
        ep.fault = fault

    # -- invocation -------------------------------------------------------------

    def invoke(self, ref: OperationRef, payload: dict[str, Any]) -> dict[str, Any]:
        ep = self._endpoints.get(ref.service_id)
        if ep is None:
            raise OrchestrationError(f"endpoint {ref.service_id!r} is not registered on the bus")
        with self._lock:
            self._log.append(Invocation(ref.service_id, ref.operation_id, dict(payload)))
        if ep.kind == ENDPOINT_HUMAN:
            raise HumanTaskPending(ref.service_id)
        if ep.fault:
            raise EndpointFault(str(ref), "endpoint configured to fault")
        if ep.kind == ENDPOINT_MOCK:
            try:
                return dict(ep.handler(payload))
            except EndpointFault:
                raise
            except Exception as exc:
                raise EndpointFault(str(ref), str(exc)) from exc
        # http
        import httpx

        try:
            resp = httpx.post(ep.url, json=payload, timeout=self._http_timeout)
        except httpx.HTTPError as exc:
            raise EndpointFault(str(ref), str(exc)) from exc
        if resp.status_code != 200:
            raise EndpointFault(str(ref), f"status {resp.status_code}")
        return dict(resp.json())

    # -- observation -----------------------------------------------------------

    @property
    def invocations(self) -> list[Invocation]:
        with self._lock:
            return list(self._log)

    def invocation_multiset(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for inv in self.invocations:
            key = f"{inv.service_id}#{inv.operation_id}"
            counts[key] = counts.get(key, 0) + 1
        return counts
