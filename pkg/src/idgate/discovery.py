"""Turning a user-typed identifier into a provider endpoint.

Three stages:

1. Normalize the typed value to a canonical claimed URL.
2. Ask the URL for a service document, either directly (content type or
   ``X-XRDS-Location`` header) or via an equivalent ``<meta>`` pointer.
3. Failing that, scan the page's ``<head>`` for provider links.

The result says which endpoint to talk to, which protocol generation it
speaks, and what identity to assert there.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from html.parser import HTMLParser
from urllib.parse import urlsplit, urlunsplit

from .fetch import FetchedResponse, Fetcher, FetchError

logger = logging.getLogger(__name__)

XRDS_CONTENT_TYPE = "application/xrds+xml"
XRDS_LOCATION_HEADER = "x-xrds-location"

SIGNON_2_0 = "http://specs.openid.net/auth/2.0/signon"
SIGNON_1_1 = "http://openid.net/signon/1.1"
SIGNON_1_0 = "http://openid.net/signon/1.0"
SERVER_2_0 = "http://specs.openid.net/auth/2.0/server"

# Lower value wins; services without a priority sort last.
NO_PRIORITY = 10**9

DEFAULT_PORTS = {"http": "80", "https": "443"}

XRI_PREFIXES = ("=", "@", "+", "$", "!", "(")


class DiscoveryError(Exception):
    """The identifier cannot be resolved to a provider endpoint."""


# -- identifier normalization ----------------------------------------------


def normalize_identifier(value: str) -> str:
    """Canonical claimed-identifier form of what the user typed.

    Adds a scheme when missing, lowercases scheme and host, drops default
    ports and any fragment, and gives empty paths a trailing slash.
    """
    value = value.strip()
    if not value:
        raise DiscoveryError("Expected an OpenID URL.")
    if value.startswith("xri://") or value.startswith(XRI_PREFIXES):
        raise DiscoveryError("XRI identifiers are not supported")
    split = urlsplit(value)
    if not split.scheme:
        split = urlsplit("http://" + value)
    scheme = split.scheme.lower()
    if scheme not in ("http", "https"):
        raise DiscoveryError(f"unsupported scheme {scheme!r}")
    host = split.hostname
    if not host:
        raise DiscoveryError(f"no host in {value!r}")
    host = host.lower()
    port = split.port
    if port is not None and str(port) != DEFAULT_PORTS[scheme]:
        host = f"{host}:{port}"
    path = split.path or "/"
    return urlunsplit((scheme, host, path, split.query, ""))


# -- service documents -----------------------------------------------------


@dataclass(frozen=True)
class XrdsService:
    types: tuple[str, ...]
    uris: tuple[str, ...]
    local_id: str | None
    priority: int


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _priority_of(element: ET.Element) -> int:
    raw = element.get("priority")
    if raw is None:
        return NO_PRIORITY
    try:
        return int(raw)
    except ValueError:
        return NO_PRIORITY


def parse_xrds(text: str) -> list[XrdsService]:
    """Service entries of a service document, best candidates first."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise DiscoveryError(f"unparsable service document: {exc}") from exc
    services: list[tuple[int, int, XrdsService]] = []
    order = 0
    for element in root.iter():
        if _localname(element.tag) != "Service":
            continue
        types: list[str] = []
        uris: list[tuple[int, int, str]] = []
        local_id = None
        for child in element:
            name = _localname(child.tag)
            text_value = (child.text or "").strip()
            if not text_value:
                continue
            if name == "Type":
                types.append(text_value)
            elif name == "URI":
                uris.append((_priority_of(child), len(uris), text_value))
            elif name in ("LocalID", "Delegate") and local_id is None:
                local_id = text_value
        uris.sort()
        service = XrdsService(
            tuple(types), tuple(u for _, _, u in uris), local_id, _priority_of(element)
        )
        services.append((service.priority, order, service))
        order += 1
    services.sort(key=lambda item: item[:2])
    return [s for _, _, s in services]


class _HeadParser(HTMLParser):
    """Collects link relations and meta pointers from a page head."""

    def __init__(self) -> None:
        super().__init__()
        self.links: list[tuple[tuple[str, ...], str]] = []
        self.xrds_location: str | None = None
        self._done = False

    def handle_starttag(self, tag: str, attrs) -> None:
        if self._done:
            return
        if tag == "body":
            self._done = True
            return
        mapping = {k.lower(): (v or "") for k, v in attrs}
        if tag == "link":
            rel = tuple(mapping.get("rel", "").lower().split())
            href = mapping.get("href", "")
            if rel and href:
                self.links.append((rel, href))
        elif tag == "meta":
            if mapping.get("http-equiv", "").lower() == XRDS_LOCATION_HEADER:
                content = mapping.get("content", "").strip()
                if content and self.xrds_location is None:
                    self.xrds_location = content

    def handle_endtag(self, tag: str) -> None:
        if tag == "head":
            self._done = True


def parse_html_head(text: str) -> _HeadParser:
    parser = _HeadParser()
    try:
        parser.feed(text)
        parser.close()
    except Exception:  # noqa: BLE001 - a broken page is a discovery miss
        logger.debug("unparsable HTML during discovery", exc_info=True)
    return parser


def _link_value(links: list[tuple[tuple[str, ...], str]], rel: str) -> str | None:
    for rels, href in links:
        if rel in rels:
            return href
    return None


# -- the discovery walk ----------------------------------------------------


@dataclass(frozen=True)
class DiscoveryResult:
    claimed_id: str
    op_endpoint: str
    version: str
    local_id: str | None = None
    service_types: tuple[str, ...] = ()

    @property
    def identity(self) -> str:
        """Identifier asserted at the provider; differs from the claimed one
        only when a local alias is published."""
        return self.local_id or self.claimed_id


def fetch_service_document(
    fetcher: Fetcher, url: str
) -> tuple[str, str | None, FetchedResponse]:
    """Resolve a URL to (final URL, service document text or None, the page
    response).  Follows at most one document pointer, from either the
    header or an equivalent meta tag."""
    response = fetcher.get(url, headers={"Accept": XRDS_CONTENT_TYPE})
    if not response.ok:
        raise DiscoveryError(f"fetching {url} returned status {response.status}")
    final_url = response.url
    if response.content_type == XRDS_CONTENT_TYPE:
        return final_url, response.text, response
    location = response.header(XRDS_LOCATION_HEADER)
    if not location:
        head = parse_html_head(response.text)
        location = head.xrds_location
    if location:
        doc = fetcher.get(location, headers={"Accept": XRDS_CONTENT_TYPE})
        if doc.ok and doc.content_type == XRDS_CONTENT_TYPE:
            return final_url, doc.text, response
        logger.info("document pointer %s did not yield a service document", location)
    return final_url, None, response


def _from_services(claimed_id: str, services: list[XrdsService]) -> DiscoveryResult | None:
    for service in services:
        if SERVER_2_0 in service.types:
            raise DiscoveryError(
                "provider-chosen identifiers are not supported; publish a signon service"
            )
        if SIGNON_2_0 in service.types and service.uris:
            return DiscoveryResult(
                claimed_id, service.uris[0], "2.0", service.local_id, service.types
            )
    for service in services:
        if (SIGNON_1_1 in service.types or SIGNON_1_0 in service.types) and service.uris:
            return DiscoveryResult(
                claimed_id, service.uris[0], "1.1", service.local_id, service.types
            )
    return None


def _from_links(claimed_id: str, head: _HeadParser) -> DiscoveryResult | None:
    provider = _link_value(head.links, "openid2.provider")
    if provider:
        return DiscoveryResult(
            claimed_id, provider, "2.0", _link_value(head.links, "openid2.local_id")
        )
    server = _link_value(head.links, "openid.server")
    if server:
        return DiscoveryResult(
            claimed_id, server, "1.1", _link_value(head.links, "openid.delegate")
        )
    return None


def discover(fetcher: Fetcher, user_input: str) -> DiscoveryResult:
    """Full walk from typed identifier to provider endpoint."""
    url = normalize_identifier(user_input)
    try:
        final_url, xrds_text, response = fetch_service_document(fetcher, url)
    except FetchError as exc:
        raise DiscoveryError(f"could not fetch identity page: {exc}") from exc
    claimed_id = normalize_identifier(final_url)
    if xrds_text is not None:
        result = _from_services(claimed_id, parse_xrds(xrds_text))
        if result is not None:
            return result
    result = _from_links(claimed_id, parse_html_head(response.text))
    if result is not None:
        return result
    raise DiscoveryError(f"no identity services published at {claimed_id}")
