"""Accounts, credentials, and bearer-token sessions.

Passwords are stored as salted scrypt digests; bearer tokens are opaque
random values and only their SHA-256 digest is ever journaled, so neither a
plaintext password nor a usable token can leak through storage or exports.
"""

from __future__ import annotations

import hashlib
import re
import secrets
import threading

from . import events as ev
from .errors import (
    BadCredentials,
    Expired,
    Forbidden,
    HandleTaken,
    InvalidHandle,
    InvalidToken,
    Throttled,
    WeakPassword,
)
from .ids import Role, new_id

HANDLE_RE = re.compile(r"^[a-z0-9_]{3,32}$")

MIN_PASSWORD_LEN = 10

# scrypt cost parameters: log2(N), r, p
SCRYPT_LOG_N = 14
SCRYPT_R = 8
SCRYPT_P = 1

THROTTLE_AFTER = 5
THROTTLE_BASE_MS = 1000
THROTTLE_CAP_MS = 3_600_000


def hash_password(password: str) -> str:
    salt = secrets.token_bytes(16)
    digest = hashlib.scrypt(
        password.encode("utf-8"),
        salt=salt,
        n=1 << SCRYPT_LOG_N,
        r=SCRYPT_R,
        p=SCRYPT_P,
        dklen=32,
    )
    return f"scrypt${SCRYPT_LOG_N}${SCRYPT_R}${SCRYPT_P}${salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, log_n, r, p, salt_hex, digest_hex = stored.split("$")
        if scheme != "scrypt":
            return False
        digest = hashlib.scrypt(
            password.encode("utf-8"),
            salt=bytes.fromhex(salt_hex),
            n=1 << int(log_n),
            r=int(r),
            p=int(p),
            dklen=len(bytes.fromhex(digest_hex)),
        )
        return secrets.compare_digest(digest, bytes.fromhex(digest_hex))
    except (ValueError, TypeError):
        return False


def token_digest(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


def public_account(account: dict) -> dict:
    return {
        "id": account["id"],
        "handle": account["handle"],
        "role": account["role"],
        "created_at": account["created_at"],
    }


class AuthService:
    def __init__(self, store, clock, token_lifetime_ms: int = 12 * 3600 * 1000):
        self.store = store
        self.clock = clock
        self.token_lifetime_ms = token_lifetime_ms
        # consecutive-failure counters are deliberately volatile: they guard
        # the login endpoint, they are not engagement data worth journaling
        self._failures: dict[str, dict] = {}
        self._failures_lock = threading.Lock()

    def register(
        self,
        handle: str,
        password: str,
        role: Role = Role.STUDENT,
        actor_token: str | None = None,
    ) -> dict:
        handle = handle.strip()
        if not HANDLE_RE.match(handle):
            raise InvalidHandle(
                "handle must be 3-32 characters of lowercase letters, digits, underscore"
            )
        if len(password) < MIN_PASSWORD_LEN:
            raise WeakPassword(f"password must be at least {MIN_PASSWORD_LEN} characters")
        role = Role(role)
        if role != Role.STUDENT:
            if actor_token is None:
                raise Forbidden("only an admin may create privileged accounts")
            self.authorize(actor_token, Role.ADMIN)
        at = self.clock.now_ms()
        with self.store.lock():
            if handle in self.store.state.handles:
                raise HandleTaken(f"handle {handle!r} is taken")
            account = {
                "id": new_id(at),
                "handle": handle,
                "role": role.value,
                "credential_hash": hash_password(password),
                "created_at": at,
            }
            self.store.commit(ev.USER_REGISTERED, {"user": account}, at)
        return public_account(account)

    def login(self, handle: str, password: str) -> dict:
        handle = handle.strip()
        now = self.clock.now_ms()
        with self._failures_lock:
            entry = self._failures.get(handle)
            if entry and entry["count"] >= THROTTLE_AFTER:
                backoff = min(
                    THROTTLE_BASE_MS * (2 ** (entry["count"] - THROTTLE_AFTER)),
                    THROTTLE_CAP_MS,
                )
                if now < entry["last_ms"] + backoff:
                    raise Throttled("too many failed logins for this handle")
        user_id = self.store.state.handles.get(handle)
        account = self.store.state.users.get(user_id) if user_id else None
        if account is None or not verify_password(password, account["credential_hash"]):
            with self._failures_lock:
                entry = self._failures.setdefault(handle, {"count": 0, "last_ms": 0})
                entry["count"] += 1
                entry["last_ms"] = now
            raise BadCredentials("unknown handle or wrong password")
        with self._failures_lock:
            self._failures.pop(handle, None)
        token = secrets.token_urlsafe(32)
        session = {
            "token_digest": token_digest(token),
            "user_id": account["id"],
            "issued_at": now,
            "expires_at": now + self.token_lifetime_ms,
        }
        self.store.commit(ev.SESSION_ISSUED, session, now)
        return {"token": token, "user_id": account["id"], "expires_at": session["expires_at"]}

    def authorize(self, token: str, minimum_role: Role = Role.STUDENT) -> dict:
        session = self.store.state.sessions.get(token_digest(token or ""))
        if session is None:
            raise InvalidToken("unknown bearer token")
        if self.clock.now_ms() >= session["expires_at"]:
            raise Expired("session expired")
        account = self.store.state.users[session["user_id"]]
        if Role(account["role"]).rank < Role(minimum_role).rank:
            raise Forbidden(f"requires role {Role(minimum_role).value} or above")
        return public_account(account)
