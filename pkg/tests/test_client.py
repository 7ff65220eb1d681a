"""Chat transport against a local stub server: retries, audit, embeddings."""

import http.server
import json
import threading
from types import SimpleNamespace

import pytest

from rankloop.llm.client import (
    ENDPOINT_ENV,
    ChatClient,
    ChatRequest,
    TransportError,
    complete,
    frame_attachments,
)


@pytest.fixture
def stub():
    state = {"responses": [], "calls": []}

    class Handler(http.server.BaseHTTPRequestHandler):
        def do_POST(self):
            n = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(n)) if n else {}
            state["calls"].append(
                {
                    "path": self.path,
                    "body": body,
                    "auth": self.headers.get("Authorization"),
                }
            )
            if state["responses"]:
                status, payload = state["responses"].pop(0)
            else:
                text = "echo: " + body.get("messages", [{}])[0].get("content", "")
                status, payload = 200, {
                    "choices": [{"message": {"content": text}}],
                    "usage": {"prompt_tokens": 5, "completion_tokens": 7},
                }
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield SimpleNamespace(
            url=f"http://127.0.0.1:{server.server_address[1]}/v1/chat",
            state=state,
        )
    finally:
        server.shutdown()
        thread.join()


OK_REPLY = (200, {"choices": [{"message": {"content": "matched"}}]})


class TestComplete:
    def test_round_trip(self, stub):
        result = complete(ChatRequest.user("hello"), endpoint=stub.url, retry_delay=0)
        assert result.text == "echo: hello"
        assert result.latency > 0
        assert result.prompt_tokens == 5
        assert result.completion_tokens == 7
        sent = stub.state["calls"][0]["body"]
        assert sent["messages"] == [{"role": "user", "content": "hello"}]
        assert sent["model"] == "default"

    def test_server_error_is_retried(self, stub):
        stub.state["responses"] = [(500, {"err": "boom"}), OK_REPLY]
        result = complete(ChatRequest.user("x"), endpoint=stub.url, retries=1, retry_delay=0)
        assert result.text == "matched"
        assert len(stub.state["calls"]) == 2

    def test_rejection_is_not_retried(self, stub):
        stub.state["responses"] = [(404, {"err": "nope"}), OK_REPLY]
        with pytest.raises(TransportError, match="unexpected status 404"):
            complete(ChatRequest.user("x"), endpoint=stub.url, retries=3, retry_delay=0)
        assert len(stub.state["calls"]) == 1

    def test_malformed_envelope_is_retried_then_fails(self, stub):
        stub.state["responses"] = [(200, {"nope": 1}), (200, {"choices": []})]
        with pytest.raises(TransportError, match="gave up"):
            complete(ChatRequest.user("x"), endpoint=stub.url, retries=1, retry_delay=0)
        assert len(stub.state["calls"]) == 2

    def test_unreachable_endpoint(self):
        with pytest.raises(TransportError):
            complete(
                ChatRequest.user("x"),
                endpoint="http://127.0.0.1:9/unreachable",
                retries=0,
                retry_delay=0,
                timeout=2,
            )

    def test_missing_endpoint(self, monkeypatch):
        monkeypatch.delenv(ENDPOINT_ENV, raising=False)
        with pytest.raises(TransportError, match=ENDPOINT_ENV):
            complete(ChatRequest.user("x"))

    def test_api_key_becomes_bearer_header(self, stub):
        complete(ChatRequest.user("x"), endpoint=stub.url, api_key="sk-test", retry_delay=0)
        assert stub.state["calls"][0]["auth"] == "Bearer sk-test"

    def test_attachments_ride_in_payload(self, stub):
        request = ChatRequest.user("x", attachments=("frames/a/0.jpg",))
        complete(request, endpoint=stub.url, retry_delay=0)
        assert stub.state["calls"][0]["body"]["attachments"] == ["frames/a/0.jpg"]


class TestChatClient:
    def test_model_substitution(self, stub):
        client = ChatClient(endpoint=stub.url, model="vlm-large", retry_delay=0)
        client.complete(ChatRequest.user("x"))
        assert stub.state["calls"][0]["body"]["model"] == "vlm-large"
        client.complete(ChatRequest.user("x", model="explicit"))
        assert stub.state["calls"][1]["body"]["model"] == "explicit"

    def test_audit_log_success_and_failure(self, stub, tmp_path):
        audit = tmp_path / "audit.jsonl"
        client = ChatClient(endpoint=stub.url, audit_path=str(audit), retries=0, retry_delay=0)
        client.complete(ChatRequest.user("fine"))
        stub.state["responses"] = [(500, {})]
        with pytest.raises(TransportError):
            client.complete(ChatRequest.user("broken"))
        lines = [json.loads(l) for l in audit.read_text().splitlines()]
        assert len(lines) == 2
        assert lines[0]["error"] is None
        assert lines[0]["text"] == "echo: fine"
        assert lines[0]["request"]["messages"][0]["content"] == "fine"
        assert lines[1]["error"] is not None
        assert "text" not in lines[1]

    def test_embed(self, stub):
        stub.state["responses"] = [(200, {"data": [{"embedding": [0.1, 0.2, 0.3]}]})]
        client = ChatClient(endpoint=stub.url, embed_endpoint=stub.url, model="emb")
        assert client.embed("some text") == [0.1, 0.2, 0.3]
        assert stub.state["calls"][0]["body"] == {"model": "emb", "input": "some text"}

    def test_embed_requires_endpoint(self, stub):
        client = ChatClient(endpoint=stub.url)
        with pytest.raises(TransportError, match="no embedding endpoint"):
            client.embed("x")

    def test_max_in_flight_validation(self, stub):
        with pytest.raises(ValueError):
            ChatClient(endpoint=stub.url, max_in_flight=0)


class TestFrameAttachments:
    def test_single_frame(self):
        assert frame_attachments("f/{id}/{index}.jpg", "vid7", 1) == ("f/vid7/0.jpg",)

    def test_uniform_spread(self):
        out = frame_attachments("{id}:{index}", "v", 5, total=100)
        indices = [int(s.split(":")[1]) for s in out]
        assert indices[0] == 0
        assert indices[-1] == 99
        assert indices == sorted(indices)
        assert len(set(indices)) == 5

    def test_two_frames_hit_both_ends(self):
        out = frame_attachments("{index}", "v", 2, total=50)
        assert out == ("0", "49")

    def test_frame_count_validation(self):
        with pytest.raises(ValueError):
            frame_attachments("{index}", "v", 0)
