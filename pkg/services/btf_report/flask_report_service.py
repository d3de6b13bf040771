"""
Flask web service for browsing BTF ledgers and closed-form size reports.
"""

import json
from pathlib import Path

from flask import Flask, Response, abort, jsonify, render_template_string, request
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address

from services.btf_protocol.messages import Channel, Model
from tools.btf_harness.reports import format_bytes, report_scaling, report_template_expansion
from utils.config import load_settings
from utils.validation import validate_client_count, validate_feature_length

settings = load_settings()

app = Flask(__name__)
app.config["REPORT_DIR"] = settings.report_dir

# Initialize Flask-Limiter for rate limiting
limiter = Limiter(
    get_remote_address,
    app=app
)


def _report_dir() -> Path:
    return Path(app.config["REPORT_DIR"])


def _ledger_files() -> list:
    directory = _report_dir()
    if not directory.is_dir():
        return []
    return sorted(p.name for p in directory.glob("*.json"))


def _query_params():
    """Parameter set and feature length from the query string (400 on bad input)."""
    params = request.args.get("params", settings.params)
    try:
        l_w = validate_feature_length(request.args.get("lw", 2048))
        report_template_expansion(params, l_w)
    except ValueError as e:
        abort(Response(json.dumps({"error": str(e)}), status=400, mimetype="application/json"))
    return params, l_w


@app.route("/", methods=["GET"])
def index() -> str:
    """
    Render an HTML list of the ledger files in the report directory.

    Returns:
        str: Rendered HTML page.
    """
    return render_template_string("""
    <html>
    <head><title>BTF Ledgers</title></head>
    <body>
    <h2>BTF transmission ledgers</h2>
    {% if files %}
    <ul>
    {% for name in files %}
        <li><a href="/api/ledgers/{{ name }}">{{ name }}</a></li>
    {% endfor %}
    </ul>
    {% else %}
    <p>No ledgers in {{ directory }} yet. Run the harness with <code>bench</code> or <code>report</code>.</p>
    {% endif %}
    </body>
    </html>
    """, files=_ledger_files(), directory=_report_dir())


@app.route("/api/ledgers", methods=["GET"])
def list_ledgers() -> Response:
    return jsonify({"ledgers": _ledger_files()})


@app.route("/api/ledgers/<name>", methods=["GET"])
def get_ledger(name: str) -> Response:
    """
    Return one ledger file as JSON.

    Returns:
        Response: The parsed file, 400 for a bad name, 404 if absent.
    """
    if "/" in name or "\\" in name or name.startswith(".") or not name.endswith(".json"):
        return jsonify({"error": "Ledger names are plain .json file names."}), 400
    path = _report_dir() / name
    if not path.is_file():
        return jsonify({"error": f"No ledger named {name}."}), 404
    return jsonify(json.loads(path.read_text(encoding="utf-8")))


@app.route("/api/setup-report", methods=["GET"])
def setup_report() -> Response:
    """Closed-form setup-stage C→S totals, ratios and template expansion for one client."""
    params, l_w = _query_params()
    scaling = report_scaling(1, params, l_w)
    c_to_s = {model: channels.get(Channel.C_TO_S.label, 0) for model, channels in scaling.setup_traffic.items()}
    btf = c_to_s[Model.BTF.value]
    return jsonify({
        "params": scaling.params,
        "l_w": l_w,
        "c_to_s": c_to_s,
        "c_to_s_readable": {model: format_bytes(n) for model, n in c_to_s.items()},
        "ratios": {model: n / btf for model, n in c_to_s.items() if model != Model.BTF.value},
        "template_expansion": report_template_expansion(params, l_w),
    })


@app.route("/api/scaling", methods=["GET"])
@limiter.limit("60 per minute")
def scaling() -> Response:
    params, l_w = _query_params()
    try:
        n_c = validate_client_count(request.args.get("n_c", 1))
    except ValueError as e:
        return jsonify({"error": str(e)}), 400
    return jsonify(report_scaling(n_c, params, l_w).to_dict())
