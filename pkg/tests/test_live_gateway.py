from __future__ import annotations

import httpx
import pytest

from soctutor.dialogue import GatewayRequest, LiveGateway, call_with_retry
from soctutor.errors import GatewayError, GatewayTimeout

REQUEST = GatewayRequest(
    model="tutor-default",
    messages=[
        {"role": "system", "content": "guide, do not solve"},
        {"role": "user", "content": "why does my loop never end"},
    ],
    temperature=0.3,
    max_output_tokens=700,
)

OK_PAYLOAD = {
    "choices": [
        {"message": {"content": "What does the loop condition see?"}, "finish_reason": "stop"}
    ],
    "usage": {"prompt_tokens": 12, "completion_tokens": 9},
}


def _gateway(handler) -> LiveGateway:
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return LiveGateway("http://llm.test/v1/chat/completions", api_key="sk-test", client=client)


def test_request_wire_format_and_response_parse():
    captured = {}

    def handler(request: httpx.Request) -> httpx.Response:
        captured["body"] = request.read().decode()
        captured["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=OK_PAYLOAD)

    response = _gateway(handler).complete(REQUEST)
    assert response.text == "What does the loop condition see?"
    assert response.finish_reason == "stop"
    assert response.usage["prompt_tokens"] == 12
    assert captured["auth"] == "Bearer sk-test"
    import json

    body = json.loads(captured["body"])
    assert body == {
        "model": "tutor-default",
        "messages": REQUEST.messages,
        "temperature": 0.3,
        "max_tokens": 700,
    }


def test_server_error_is_transient():
    def handler(request):
        return httpx.Response(503, text="overloaded")

    with pytest.raises(GatewayError) as err:
        _gateway(handler).complete(REQUEST)
    assert err.value.details.get("transient") is True


def test_client_error_is_not_transient():
    def handler(request):
        return httpx.Response(400, json={"error": "bad request"})

    with pytest.raises(GatewayError) as err:
        _gateway(handler).complete(REQUEST)
    assert err.value.details.get("transient") is False


def test_timeout_maps_to_gateway_timeout():
    def handler(request):
        raise httpx.ReadTimeout("no answer")

    with pytest.raises(GatewayTimeout):
        _gateway(handler).complete(REQUEST)


def test_malformed_response_rejected():
    def handler(request):
        return httpx.Response(200, json={"surprise": True})

    with pytest.raises(GatewayError):
        _gateway(handler).complete(REQUEST)


def test_retry_recovers_from_one_transient_5xx():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            return httpx.Response(502, text="bad gateway")
        return httpx.Response(200, json=OK_PAYLOAD)

    response = call_with_retry(_gateway(handler), REQUEST)
    assert response.text
    assert calls["n"] == 2


def test_retry_does_not_mask_two_failures():
    def handler(request):
        return httpx.Response(500, text="down")

    with pytest.raises(GatewayError):
        call_with_retry(_gateway(handler), REQUEST)
