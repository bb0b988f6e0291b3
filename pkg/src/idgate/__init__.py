"""idgate: single sign-on gateway toolkit.

Combines an OpenID relying party, a minimal test identity provider, and a
temporal role-based access control engine behind one HTTP gateway, CLI, and
admin console.
"""

__version__ = "0.1.0"
