"""Identifier normalization and endpoint discovery."""

import pytest

from idgate.discovery import (
    SIGNON_1_1,
    SIGNON_2_0,
    DiscoveryError,
    discover,
    normalize_identifier,
    parse_html_head,
    parse_xrds,
)
from idgate.fetch import FetchedResponse


class FakeFetcher:
    """Serves canned pages; an entry may redirect by naming a final URL."""

    def __init__(self, pages):
        self.pages = pages
        self.requests = []

    def get(self, url, headers=None):
        self.requests.append(url)
        try:
            page = self.pages[url]
        except KeyError:
            return FetchedResponse(url, 404, {}, b"not here")
        final_url = page.get("final_url", url)
        headers_out = {k.lower(): v for k, v in page.get("headers", {}).items()}
        headers_out.setdefault("content-type", page.get("content_type", "text/html"))
        return FetchedResponse(final_url, page.get("status", 200), headers_out, page["body"])

    def post(self, url, body, content_type):
        raise AssertionError("discovery never posts")


# -- normalization ---------------------------------------------------------


@pytest.mark.parametrize(
    "typed,expected",
    [
        ("example.com", "http://example.com/"),
        ("example.com/path", "http://example.com/path"),
        ("  example.com  ", "http://example.com/"),
        ("HTTP://EXAMPLE.COM/Case", "http://example.com/Case"),
        ("http://example.com:80/", "http://example.com/"),
        ("https://example.com:443/", "https://example.com/"),
        ("http://example.com:8000/", "http://example.com:8000/"),
        ("http://example.com/a#frag", "http://example.com/a"),
        ("http://example.com/?q=1#frag", "http://example.com/?q=1"),
        ("https://id.example/u/bob", "https://id.example/u/bob"),
    ],
)
def test_normalization(typed, expected):
    assert normalize_identifier(typed) == expected


def test_empty_identifier_message():
    with pytest.raises(DiscoveryError, match=r"^Expected an OpenID URL\.$"):
        normalize_identifier("   ")


@pytest.mark.parametrize("xri", ["=name", "@org*unit", "xri://=name", "+generic", "$special"])
def test_xri_identifiers_rejected(xri):
    with pytest.raises(DiscoveryError, match="XRI"):
        normalize_identifier(xri)


def test_other_schemes_rejected():
    with pytest.raises(DiscoveryError):
        normalize_identifier("ftp://example.com/")


# -- service document parsing ----------------------------------------------

XRDS_TWO_SERVICES = """<?xml version="1.0" encoding="UTF-8"?>
<xrds:XRDS xmlns:xrds="xri://$xrds" xmlns="xri://$xrd*($v*2.0)">
  <XRD>
    <Service priority="20">
      <Type>http://openid.net/signon/1.1</Type>
      <URI>http://op.example/v1</URI>
    </Service>
    <Service priority="10">
      <Type>http://specs.openid.net/auth/2.0/signon</Type>
      <URI priority="5">http://op.example/endpoint</URI>
      <URI priority="1">http://op-primary.example/endpoint</URI>
      <LocalID>http://op.example/id/bob</LocalID>
    </Service>
  </XRD>
</xrds:XRDS>
"""


def test_xrds_priority_order_and_fields():
    services = parse_xrds(XRDS_TWO_SERVICES)
    assert [s.priority for s in services] == [10, 20]
    best = services[0]
    assert SIGNON_2_0 in best.types
    assert best.uris == ("http://op-primary.example/endpoint", "http://op.example/endpoint")
    assert best.local_id == "http://op.example/id/bob"


def test_xrds_without_priority_sorts_last():
    text = XRDS_TWO_SERVICES.replace(' priority="10"', "")
    services = parse_xrds(text)
    assert [s.priority for s in services][0] == 20


def test_unparsable_xrds_raises():
    with pytest.raises(DiscoveryError):
        parse_xrds("<xrds:XRDS")


# -- html head parsing -----------------------------------------------------

HTML_V2 = """<html><head>
<link rel="openid2.provider" href="http://op.example/endpoint">
<link rel="openid2.local_id" href="http://op.example/id/bob">
</head><body>
<link rel="openid2.provider" href="http://evil.example/">
</body></html>"""

HTML_V1 = """<html><head>
<link rel="openid.server openid.delegate" href="http://op.example/v1">
</head></html>"""


def test_head_links_stop_at_body():
    head = parse_html_head(HTML_V2)
    hrefs = [href for rels, href in head.links]
    assert hrefs == ["http://op.example/endpoint", "http://op.example/id/bob"]


def test_meta_document_pointer_and_entity_unescaping():
    head = parse_html_head(
        '<html><head><meta http-equiv="X-XRDS-Location" '
        'content="http://id.example/xrds?a=1&amp;b=2"></head></html>'
    )
    assert head.xrds_location == "http://id.example/xrds?a=1&b=2"


# -- full discovery --------------------------------------------------------


def xrds_page(body):
    return {"body": body.encode(), "content_type": "application/xrds+xml"}


def test_discover_direct_service_document():
    fetcher = FakeFetcher({"http://id.example/bob": xrds_page(XRDS_TWO_SERVICES)})
    result = discover(fetcher, "id.example/bob")
    assert result.claimed_id == "http://id.example/bob"
    assert result.op_endpoint == "http://op-primary.example/endpoint"
    assert result.version == "2.0"
    assert result.identity == "http://op.example/id/bob"


def test_discover_via_location_header():
    fetcher = FakeFetcher(
        {
            "http://id.example/bob": {
                "body": b"<html><head></head></html>",
                "headers": {"X-XRDS-Location": "http://id.example/bob/xrds"},
            },
            "http://id.example/bob/xrds": xrds_page(XRDS_TWO_SERVICES),
        }
    )
    result = discover(fetcher, "http://id.example/bob")
    assert result.op_endpoint == "http://op-primary.example/endpoint"


def test_discover_via_meta_pointer():
    fetcher = FakeFetcher(
        {
            "http://id.example/bob": {
                "body": (
                    '<html><head><meta http-equiv="x-xrds-location" '
                    'content="http://id.example/meta-xrds"></head></html>'
                ).encode()
            },
            "http://id.example/meta-xrds": xrds_page(XRDS_TWO_SERVICES),
        }
    )
    assert discover(fetcher, "id.example/bob").version == "2.0"


def test_discover_falls_back_to_links():
    fetcher = FakeFetcher({"http://id.example/bob": {"body": HTML_V2.encode()}})
    result = discover(fetcher, "id.example/bob")
    assert result.op_endpoint == "http://op.example/endpoint"
    assert result.local_id == "http://op.example/id/bob"
    assert result.version == "2.0"


def test_discover_v1_links():
    fetcher = FakeFetcher({"http://id.example/bob": {"body": HTML_V1.encode()}})
    result = discover(fetcher, "id.example/bob")
    assert result.version == "1.1"
    assert result.op_endpoint == "http://op.example/v1"
    assert result.local_id == "http://op.example/v1"


def test_redirect_changes_claimed_id():
    fetcher = FakeFetcher(
        {
            "http://id.example/bob": {
                "body": HTML_V2.encode(),
                "final_url": "https://id.example/people/bob",
            }
        }
    )
    result = discover(fetcher, "id.example/bob")
    assert result.claimed_id == "https://id.example/people/bob"


def test_provider_chosen_identifier_service_refused():
    text = XRDS_TWO_SERVICES.replace(
        "http://specs.openid.net/auth/2.0/signon",
        "http://specs.openid.net/auth/2.0/server",
    )
    fetcher = FakeFetcher({"http://id.example/bob": xrds_page(text)})
    with pytest.raises(DiscoveryError, match="signon"):
        discover(fetcher, "id.example/bob")


def test_no_services_anywhere():
    fetcher = FakeFetcher({"http://id.example/bob": {"body": b"<html><head></head></html>"}})
    with pytest.raises(DiscoveryError, match="no identity services"):
        discover(fetcher, "id.example/bob")


def test_fetch_failure_surfaces_as_discovery_error():
    fetcher = FakeFetcher({})
    with pytest.raises(DiscoveryError):
        discover(fetcher, "gone.example/x")


def test_signon_v1_service_used_when_no_v2():
    text = """<?xml version="1.0"?>
    <XRDS xmlns="xri://$xrd*($v*2.0)"><XRD><Service>
      <Type>http://openid.net/signon/1.1</Type>
      <URI>http://op.example/v1</URI>
      <Delegate xmlns="http://openid.net/xmlns/1.0">http://op.example/id/old</Delegate>
    </Service></XRD></XRDS>"""
    fetcher = FakeFetcher({"http://id.example/bob": xrds_page(text)})
    result = discover(fetcher, "id.example/bob")
    assert result.version == "1.1"
    assert SIGNON_1_1 in result.service_types
    assert result.identity == "http://op.example/id/old"
