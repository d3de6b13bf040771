import re


def validate_client_id(client_id: str) -> str:
    """
    Validate a client identifier used to key server-side records.

    Only letters, numbers, hyphens, underscores and periods are allowed.

    Args:
        client_id (str): The identifier to validate.

    Returns:
        str: The stripped identifier.

    Raises:
        ValueError: If the identifier is invalid.
    """
    if not isinstance(client_id, str):
        raise ValueError("Client id must be a string.")
    client_id = client_id.strip()
    if len(client_id) == 0 or len(client_id) > 64:
        raise ValueError("Client id must be 1-64 characters long.")
    if not re.match(r"^[A-Za-z0-9._\-]+$", client_id):
        raise ValueError("Client id contains invalid characters. Allowed: letters, numbers, hyphens, underscores, and periods.")
    return client_id


def validate_feature_length(l_w) -> int:
    """Feature lengths must be a positive multiple of 8 so bit vectors pack into whole bytes."""
    try:
        l_w = int(l_w)
    except (TypeError, ValueError):
        raise ValueError("Feature length must be an integer.") from None
    if l_w < 8 or l_w % 8:
        raise ValueError("Feature length must be a positive multiple of 8.")
    return l_w


def validate_threshold(threshold, l_w: int):
    """Allow None (use the default) or an integer in [0, l_w]."""
    if threshold is None or threshold == "":
        return None
    try:
        threshold = int(threshold)
    except (TypeError, ValueError):
        raise ValueError("Threshold must be an integer.") from None
    if not 0 <= threshold <= l_w:
        raise ValueError(f"Threshold must lie in [0, {l_w}].")
    return threshold


def validate_client_count(n_c) -> int:
    try:
        n_c = int(n_c)
    except (TypeError, ValueError):
        raise ValueError("Client count must be an integer.") from None
    if not 1 <= n_c <= 100000:
        raise ValueError("Client count must lie in [1, 100000].")
    return n_c
