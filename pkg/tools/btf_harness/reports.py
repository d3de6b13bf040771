"""
Report builders for the BTF harness.

Setup-stage comparison tables, template expansion figures, multi-client
scaling projections and timing summaries. Every builder returns a plain
dict that is printed as a table and written as JSON.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from services.btf_protocol.ledger import SETUP_PHASES, Phase, TransmissionLedger
from services.btf_protocol.messages import Artifact, Channel, Model
from utils.errors import IncompleteRun
from utils.params import default_bootstrap, lookup_params
from utils.trivium import IV_BITS, KEY_BITS

KB = 1024
MB = 1024 * 1024

SETUP_LABELS = ("E^FHE.Init", "E^FHE.KeyStream")
REGISTRATION_LABEL = "Eval(E⁻¹)"
REGISTRATION_RIVALS = ("E.KeyStream", "E(w, k̄)", "Enc(c, pk_c)")

# Full-size setting: TFHE128 with 2048-bit features.
REFERENCE_PARAMS = "tfhe128"
REFERENCE_LW = 2048


def format_bytes(nbytes: int) -> str:
    """Human-readable size with 1024-based KB and MB."""
    if nbytes >= MB:
        return f"{nbytes / MB:.2f} MB"
    if nbytes >= KB:
        return f"{nbytes / KB:.2f} KB"
    return f"{nbytes} B"


def unit_sizes(params, l_w: int) -> dict:
    """
    Exact serialized size of every artifact, from the size laws alone.

    Returns:
        dict: Artifact -> bytes.
    """
    lwe = lookup_params(params)
    ct = lwe.ciphertext_bytes
    dk = KEY_BITS * ct
    return {
        Artifact.PK_K: KEY_BITS * ct,
        Artifact.PK_C: l_w * ct,
        Artifact.EVK: default_bootstrap(lwe).evaluation_key_bytes,
        Artifact.E_DK: dk,
        Artifact.DK: dk,
        Artifact.K_PRIME: dk,
        Artifact.IV: IV_BITS // 8,
        Artifact.C: l_w // 8,
        Artifact.C_PRIME: l_w // 8,
        Artifact.ENC_W: l_w * ct,
        Artifact.ENC_W_PRIME: l_w * ct,
        Artifact.ENC_R: ct,
        Artifact.R: 1,
    }


def unit_sizes_from_ledgers(ledgers, params, l_w: int) -> dict:
    """Size laws overridden by whatever the ledgers actually measured."""
    units = unit_sizes(params, l_w)
    for ledger in ledgers:
        for artifact in units:
            measured = ledger.unit_size(artifact)
            if measured:
                units[artifact] = measured
    return units


def _by_model(ledgers) -> dict:
    if isinstance(ledgers, dict):
        ledgers = ledgers.values()
    return {ledger.model: ledger for ledger in ledgers}


def report_setup(ledgers) -> dict:
    """
    Compare the setup-stage transmission of the three models.

    Args:
        ledgers: Iterable (or dict) of TransmissionLedger, one per model.

    Returns:
        dict: Per-model channel totals, the C→S reduction ratios and evk sub-sizes.

    Raises:
        IncompleteRun: If a model is missing, a ledger has no key distribution
            entries, or the ledgers disagree on parameters or l_w.
    """
    by_model = _by_model(ledgers)
    missing = [m.value for m in Model if m not in by_model]
    if missing:
        raise IncompleteRun(f"Setup report needs a run of every model; missing {', '.join(missing)}.")
    for ledger in by_model.values():
        if not ledger.select([Phase.KDP]):
            raise IncompleteRun(f"The {ledger.model.value} ledger holds no key distribution entries.")
    params = {ledger.params for ledger in by_model.values()}
    if len(params) != 1:
        raise IncompleteRun(f"Ledgers mix parameter sets: {sorted(params)}.")
    params = params.pop()
    widths = {ledger.l_w for ledger in by_model.values()}
    if len(widths) != 1:
        raise IncompleteRun(f"Ledgers mix feature lengths: {sorted(widths)}.")
    l_w = widths.pop()

    models = {}
    for model, ledger in by_model.items():
        channels = {c.label: n for c, n in ledger.by_channel(SETUP_PHASES).items()}
        models[model.value] = {
            "l_w": ledger.l_w,
            "channels": channels,
            "c_to_s": ledger.total(Channel.C_TO_S, SETUP_PHASES),
        }
    btf = models[Model.BTF.value]["c_to_s"]
    bp = default_bootstrap(params)
    return {
        "params": params,
        "l_w": l_w,
        "reference_setting": lookup_params(params) is lookup_params(REFERENCE_PARAMS) and l_w == REFERENCE_LW,
        "models": models,
        "ratios": {
            Model.ST_FHE.value: models[Model.ST_FHE.value]["c_to_s"] / btf,
            Model.ORIG_TC.value: models[Model.ORIG_TC.value]["c_to_s"] / btf,
        },
        "evk": {
            "bootstrapping": bp.bootstrap_key_bytes,
            "key_switching": bp.keyswitch_key_bytes,
            "total": bp.evaluation_key_bytes,
        },
    }


def report_template_expansion(params, l_w: int = 2048) -> dict:
    """
    How much larger FHE ciphertexts are than what the client actually sends.

    The raw figure divides the template by the l_w/8-byte stream ciphertext.
    The half-kilobyte convention divides the template size in MB by 0.5 KB,
    once reading MB as 1000 KB after rounding to two decimals and once with
    exact 1024-based units.
    """
    lwe = lookup_params(params)
    ct = lwe.ciphertext_bytes
    template = l_w * ct
    stream = l_w // 8
    template_mb = round(template / MB, 2)
    return {
        "params": lwe.name.value.lower(),
        "l_w": l_w,
        "template_bytes": template,
        "stream_ciphertext_bytes": stream,
        "raw_expansion": template / stream,
        "half_kb_convention": {
            "template_mb": template_mb,
            "decimal": template_mb * 1000 / 0.5,
            "binary": template / (KB / 2),
        },
        "result_reduction": {
            "bytes": ct,
            "bits": ct * 8,
        },
    }


@dataclass
class ScalingReport:
    """
    Closed-form storage and setup traffic as functions of the client count.

    Attributes:
        n_c (int): Number of clients.
        params (str): Parameter set name.
        l_w (int): Feature length.
        server_storage (dict): Model -> bytes of keys and templates the server holds.
        server_evk (dict): Model -> bytes of evaluation keys among them.
        trusted_party_storage (int): Bytes the BTF trusted party holds.
        client_storage (dict): Model -> bytes of keys each client holds.
        setup_traffic (dict): Model -> {channel label: bytes} over the setup stage.
    """
    n_c: int
    params: str
    l_w: int
    server_storage: dict
    server_evk: dict
    trusted_party_storage: int
    client_storage: dict
    setup_traffic: dict

    def to_dict(self) -> dict:
        return asdict(self)


def report_scaling(n_c: int, params, l_w: int = 2048, ledgers=()) -> ScalingReport:
    """
    Project storage and setup traffic to ``n_c`` clients.

    Unit sizes come from the ledgers when given, otherwise from the size
    laws. BTF keeps one pk_c and one evk whatever n_c is; the baselines keep
    one per client.

    Raises:
        ValueError: If n_c is below 1.
    """
    if n_c < 1:
        raise ValueError("Client count must be at least 1.")
    lwe = lookup_params(params)
    u = unit_sizes_from_ledgers(ledgers, lwe, l_w)
    sk = lwe.secret_key_bytes
    trivium_key = (KEY_BITS + IV_BITS) // 8
    template = u[Artifact.ENC_W]

    btf_per_client = u[Artifact.E_DK] + u[Artifact.IV] + template
    orig_per_client = u[Artifact.PK_C] + u[Artifact.EVK] + u[Artifact.DK] + u[Artifact.IV] + template
    return ScalingReport(
        n_c=n_c,
        params=lwe.name.value.lower(),
        l_w=l_w,
        server_storage={
            Model.BTF.value: u[Artifact.PK_C] + u[Artifact.EVK] + n_c * btf_per_client,
            Model.ST_FHE.value: n_c * (u[Artifact.EVK] + template),
            Model.ORIG_TC.value: n_c * orig_per_client,
        },
        server_evk={
            Model.BTF.value: u[Artifact.EVK],
            Model.ST_FHE.value: n_c * u[Artifact.EVK],
            Model.ORIG_TC.value: n_c * u[Artifact.EVK],
        },
        trusted_party_storage=sk + u[Artifact.EVK],
        client_storage={
            Model.BTF.value: trivium_key,
            Model.ST_FHE.value: sk + u[Artifact.EVK],
            Model.ORIG_TC.value: sk + u[Artifact.EVK] + u[Artifact.PK_C] + trivium_key,
        },
        setup_traffic={
            Model.BTF.value: {
                Channel.TP_TO_C.label: n_c * u[Artifact.PK_K],
                Channel.TP_TO_S.label: u[Artifact.PK_C] + u[Artifact.EVK],
                Channel.C_TO_S.label: n_c * (u[Artifact.E_DK] + u[Artifact.K_PRIME] + u[Artifact.IV]),
            },
            Model.ST_FHE.value: {
                Channel.C_TO_S.label: n_c * u[Artifact.EVK],
            },
            Model.ORIG_TC.value: {
                Channel.C_TO_S.label: n_c * (u[Artifact.PK_C] + u[Artifact.EVK] + u[Artifact.DK] + u[Artifact.IV]),
            },
        },
    )


def timing_summary(ledger: TransmissionLedger) -> list:
    """Seconds per (phase, party, label), in first-seen order."""
    totals = {}
    for t in ledger.timings:
        key = (t.phase.value, t.party, t.label)
        totals[key] = totals.get(key, 0.0) + t.seconds
    return [{"phase": p, "party": party, "label": label, "seconds": s} for (p, party, label), s in totals.items()]


def ordinal_checks(ledger: TransmissionLedger) -> dict:
    """
    Qualitative timing properties that hold on any hardware.

    ``setup``: homomorphic cipher initialization plus keystream exceeds every
    other setup operation. ``registration``: homomorphic stream decryption
    exceeds the client's keystream, its encryption and the server's Enc(c).
    A check is None when the ledger lacks the timings it needs.
    """
    checks = {"setup": None, "registration": None}
    setup_time = sum(ledger.seconds(label, SETUP_PHASES) for label in SETUP_LABELS)
    others = {t.label for t in ledger.timings if t.phase in SETUP_PHASES} - set(SETUP_LABELS)
    if setup_time:
        checks["setup"] = all(setup_time > ledger.seconds(label, SETUP_PHASES) for label in others)
    evaluation = ledger.seconds(REGISTRATION_LABEL, [Phase.RS])
    if evaluation:
        checks["registration"] = all(
            evaluation > ledger.seconds(label, [Phase.RS]) for label in REGISTRATION_RIVALS
        )
    return checks


def print_setup_table(report: dict) -> None:
    print(f"Setup-stage transmission ({report['params']}, l_w={report['l_w']})")
    print(f"{'Model':<10}{'Channel':<8}{'Bytes':>14}  {'Size':>12}")
    for model, data in report["models"].items():
        for channel, nbytes in data["channels"].items():
            print(f"{model:<10}{channel:<8}{nbytes:>14,}  {format_bytes(nbytes):>12}")
    for model, ratio in report["ratios"].items():
        print(f"C→S reduction vs {model}: {ratio:.2f}x")
    if not report["reference_setting"]:
        print(f"Note: ratios depend on the parameter set and l_w; the full-size setting is "
              f"{REFERENCE_PARAMS} with l_w={REFERENCE_LW}.")
    evk = report["evk"]
    print(
        f"evk: bootstrapping {format_bytes(evk['bootstrapping'])}, "
        f"key switching {format_bytes(evk['key_switching'])}, total {format_bytes(evk['total'])}"
    )


def print_expansion(report: dict) -> None:
    half = report["half_kb_convention"]
    print(f"Template: {format_bytes(report['template_bytes'])} for {report['l_w']} bits")
    print(f"Raw expansion over the stream ciphertext: {report['raw_expansion']:,.0f}x")
    print(f"0.5 KB convention: {half['decimal']:,.0f}x (MB read as 1000 KB), {half['binary']:,.0f}x (1024-based)")
    result = report["result_reduction"]
    print(f"Result notification: {result['bytes']:,}x fewer bytes, {result['bits']:,}x fewer bits")


def print_scaling_table(report: ScalingReport) -> None:
    print(f"Scaling to {report.n_c} clients ({report.params}, l_w={report.l_w})")
    print(f"{'Model':<10}{'Server storage':>18}{'Server evk':>16}{'Client keys':>16}")
    for model in report.server_storage:
        print(
            f"{model:<10}{format_bytes(report.server_storage[model]):>18}"
            f"{format_bytes(report.server_evk[model]):>16}{format_bytes(report.client_storage[model]):>16}"
        )
    print(f"BTF trusted party: {format_bytes(report.trusted_party_storage)}")
    for model, channels in report.setup_traffic.items():
        for channel, nbytes in channels.items():
            print(f"  {model:<10}{channel:<8}{format_bytes(nbytes):>14}")


def print_timings(ledger: TransmissionLedger) -> None:
    print(f"{'Phase':<6}{'Party':<12}{'Operation':<22}{'Seconds':>10}")
    for row in timing_summary(ledger):
        print(f"{row['phase']:<6}{row['party']:<12}{row['label']:<22}{row['seconds']:>10.3f}")


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False), encoding="utf-8")
    return path
