"""Shared fixtures: an in-memory provider and a fetcher that routes
straight into it, so protocol tests run without sockets."""

import sys

import pytest

from idgate.fetch import FetchedResponse
from idgate.op import AccountStore, Provider


class InProcessOpFetcher:
    """Fetcher facade over a Provider object.

    Serves its identity and service-document pages for GETs and feeds POSTs
    to the direct-message handler, mirroring what the HTTP app does.
    """

    def __init__(self, provider: Provider):
        self.provider = provider
        self.posts = []

    def get(self, url, headers=None):
        p = self.provider
        plain = {"content-type": "text/plain"}
        for prefix, renderer, content_type, extra in (
            (p.base_url + "/id/", p.identity_page, "text/html", True),
            (p.base_url + "/xrds/", p.xrds_document, "application/xrds+xml", False),
        ):
            if url.startswith(prefix):
                username = url[len(prefix):]
                if p.accounts.get(username) is None:
                    return FetchedResponse(url, 404, plain, b"no such identity")
                headers_out = {"content-type": content_type}
                if extra:
                    headers_out["x-xrds-location"] = p.xrds_url(username)
                return FetchedResponse(url, 200, headers_out, renderer(username).encode())
        return FetchedResponse(url, 404, plain, b"not found")

    def post(self, url, body, content_type):
        self.posts.append((url, body))
        message, ok = self.provider.handle_direct(body.decode("utf-8"))
        return FetchedResponse(
            url,
            200 if ok else 400,
            {"content-type": "text/plain; charset=utf-8"},
            message.to_kv().encode(),
        )


@pytest.fixture
def op_provider():
    accounts = AccountStore()
    accounts.add("bob", "hunter2", {"email": "bob@example.org", "nickname": "bobby"})
    accounts.add("alice", "correct horse", {"email": "alice@example.org"})
    return Provider("http://op.example", accounts)


@pytest.fixture
def op_fetcher(op_provider):
    return InProcessOpFetcher(op_provider)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance check, printed where capture cannot
    swallow it."""
    module = sys.modules.get("test_acceptance")
    if module is None:
        return
    labels = getattr(module, "LABELS", {})
    results = getattr(module, "RESULTS", {})
    if not labels:
        return
    terminalreporter.section("acceptance checks")
    for key in sorted(labels):
        label = labels[key]
        ok = results.get(label)
        verdict = "PASS" if ok else "FAIL"
        if ok is None:
            verdict = "FAIL (not run)"
        terminalreporter.write_line(f"[{verdict}] {label}")
