"""Small HTTP client abstraction.

Discovery and direct protocol calls go through a ``Fetcher`` so tests can
wire several in-process apps together without sockets, while production
code uses a real client underneath.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol

import httpx

DEFAULT_TIMEOUT = 10.0
MAX_BODY_BYTES = 1024 * 1024


class FetchError(Exception):
    """Network failure, unusable scheme, or oversized response."""


@dataclass(frozen=True)
class FetchedResponse:
    url: str
    status: int
    headers: Mapping[str, str]
    body: bytes

    @property
    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())

    @property
    def content_type(self) -> str:
        raw = self.header("content-type") or ""
        return raw.split(";", 1)[0].strip().lower()

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


class Fetcher(Protocol):
    def get(self, url: str, headers: Mapping[str, str] | None = None) -> FetchedResponse: ...

    def post(
        self, url: str, body: bytes, content_type: str
    ) -> FetchedResponse: ...


def _check_scheme(url: str) -> None:
    if not (url.startswith("http://") or url.startswith("https://")):
        raise FetchError(f"refusing non-http(s) URL {url!r}")


def _convert(response: httpx.Response) -> FetchedResponse:
    body = response.content
    if len(body) > MAX_BODY_BYTES:
        raise FetchError(f"response from {response.url} exceeds {MAX_BODY_BYTES} bytes")
    headers = {k.lower(): v for k, v in response.headers.items()}
    return FetchedResponse(str(response.url), response.status_code, headers, body)


class HttpxFetcher:
    """Fetcher over a real HTTP client.  GETs follow redirects (discovery
    needs the final URL); POSTs never do."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT, client: httpx.Client | None = None):
        self._client = client or httpx.Client(timeout=timeout, follow_redirects=False)

    def get(self, url: str, headers: Mapping[str, str] | None = None) -> FetchedResponse:
        _check_scheme(url)
        try:
            response = self._client.get(url, headers=dict(headers or {}), follow_redirects=True)
        except httpx.HTTPError as exc:
            raise FetchError(f"GET {url} failed: {exc}") from exc
        return _convert(response)

    def post(self, url: str, body: bytes, content_type: str) -> FetchedResponse:
        _check_scheme(url)
        try:
            response = self._client.post(
                url, content=body, headers={"Content-Type": content_type}
            )
        except httpx.HTTPError as exc:
            raise FetchError(f"POST {url} failed: {exc}") from exc
        return _convert(response)

    def close(self) -> None:
        self._client.close()


class RoutingFetcher:
    """Dispatches requests to in-process clients by URL prefix.

    ``routes`` maps a URL prefix (scheme and host, no trailing slash) to any
    httpx-compatible client, such as an ASGI test client.  Redirects across
    apps are followed here rather than by the underlying client, which only
    knows its own app.
    """

    MAX_REDIRECTS = 10

    def __init__(self, routes: Mapping[str, object]):
        self._routes = dict(routes)

    def _client_for(self, url: str):
        for prefix, client in self._routes.items():
            if url == prefix or url.startswith(prefix + "/") or url.startswith(prefix + "?"):
                return client
        raise FetchError(f"no route for {url!r}")

    def get(self, url: str, headers: Mapping[str, str] | None = None) -> FetchedResponse:
        _check_scheme(url)
        seen = []
        for _ in range(self.MAX_REDIRECTS):
            client = self._client_for(url)
            response = client.get(url, headers=dict(headers or {}), follow_redirects=False)
            if response.status_code in (301, 302, 303, 307, 308):
                seen.append(url)
                target = response.headers.get("location", "")
                url = httpx.URL(url).join(target).__str__()
                if url in seen:
                    raise FetchError(f"redirect loop at {url!r}")
                continue
            converted = _convert(response)
            return FetchedResponse(url, converted.status, converted.headers, converted.body)
        raise FetchError("too many redirects")

    def post(self, url: str, body: bytes, content_type: str) -> FetchedResponse:
        _check_scheme(url)
        client = self._client_for(url)
        response = client.post(url, content=body, headers={"Content-Type": content_type})
        converted = _convert(response)
        return FetchedResponse(url, converted.status, converted.headers, converted.body)
