/*
 * Copyright 2026 The xmatch authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"). You may not use this file except in compliance
 * with the License. A copy of the License is located at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * or in the "license" file accompanying this file. This file is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES
 * OR CONDITIONS OF ANY KIND, either express or implied. See the License for the specific language governing permissions
 * and limitations under the License.
 */

#include "xmatch/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <system_error>

namespace xmatch {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path);
    std::string content;
    in.seekg(0, std::ios::end);
    content.resize(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(content.data(), static_cast<std::streamsize>(content.size()));
    return content;
}

// Iterates '\n'-separated lines over an in-memory buffer, stripping '\r'.
struct LineCursor {
    std::string_view buf;
    size_t pos = 0;
    size_t line_no = 0;

    bool next(std::string_view& out) {
        if (pos >= buf.size()) return false;
        size_t eol = buf.find('\n', pos);
        if (eol == std::string_view::npos) eol = buf.size();
        out = buf.substr(pos, eol - pos);
        if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
        pos = eol + 1;
        ++line_no;
        return true;
    }
};

[[noreturn]] void fail(const std::string& path, size_t line_no, const std::string& what) {
    throw data_error(path + ":" + std::to_string(line_no) + ": " + what);
}

uint64_t parse_uint(std::string_view tok, const std::string& path, size_t line_no) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) {
        fail(path, line_no, "expected unsigned integer, got '" + std::string(tok) + "'");
    }
    return v;
}

float parse_float(std::string_view tok, const std::string& path, size_t line_no) {
    float v = 0.0f;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) {
        fail(path, line_no, "expected float, got '" + std::string(tok) + "'");
    }
    if (!std::isfinite(v)) fail(path, line_no, "non-finite value '" + std::string(tok) + "'");
    return v;
}

std::string_view next_token(std::string_view& rest) {
    size_t start = rest.find_first_not_of(" \t");
    if (start == std::string_view::npos) {
        rest = {};
        return {};
    }
    size_t end = rest.find_first_of(" \t", start);
    std::string_view tok = rest.substr(start, end == std::string_view::npos ? rest.size() - start
                                                                            : end - start);
    rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
    return tok;
}

void append_float(std::string& out, float v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, p);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open file for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw data_error("write failed: " + path);
}

std::pair<index_t, index_t> read_matrix_header(LineCursor& cur, const std::string& path) {
    std::string_view line;
    if (!cur.next(line)) fail(path, 1, "missing header");
    std::string_view rest = line;
    std::string_view a = next_token(rest);
    std::string_view b = next_token(rest);
    if (a.empty() || b.empty() || !next_token(rest).empty()) {
        fail(path, cur.line_no, "malformed header, expected 'n_rows n_cols'");
    }
    return {static_cast<index_t>(parse_uint(a, path, cur.line_no)),
            static_cast<index_t>(parse_uint(b, path, cur.line_no))};
}

}  // namespace

XmcData load_xmc_text(const std::string& path) {
    std::string content = slurp(path);
    LineCursor cur{content};

    std::string_view header;
    if (!cur.next(header)) throw data_error(path + ": empty file, missing 'N D L' header");
    std::string_view rest = header;
    std::string_view tn = next_token(rest), td = next_token(rest), tl = next_token(rest);
    if (tn.empty() || td.empty() || tl.empty() || !next_token(rest).empty()) {
        fail(path, cur.line_no, "malformed header, expected 'N D L'");
    }
    index_t n = static_cast<index_t>(parse_uint(tn, path, 1));
    index_t d = static_cast<index_t>(parse_uint(td, path, 1));
    index_t l = static_cast<index_t>(parse_uint(tl, path, 1));

    SparseBuilder features(n, d);
    SparseBuilder labels(n, l);

    std::string_view line;
    for (index_t rows = 0; rows < n; ++rows) {
        if (!cur.next(line)) {
            throw data_error(path + ": declared N=" + std::to_string(n) + " but found only " +
                             std::to_string(rows) + " data lines");
        }
        std::string_view body = line;
        std::string_view label_tok = next_token(body);
        if (label_tok.empty() || label_tok.find(':') != std::string_view::npos) {
            fail(path, cur.line_no, "empty label list");
        }
        size_t start = 0;
        while (start <= label_tok.size()) {
            size_t comma = label_tok.find(',', start);
            std::string_view one =
                label_tok.substr(start, comma == std::string_view::npos ? label_tok.size() - start
                                                                        : comma - start);
            if (one.empty()) fail(path, cur.line_no, "empty label id in label list");
            uint64_t id = parse_uint(one, path, cur.line_no);
            if (id >= l) fail(path, cur.line_no, "label index " + std::to_string(id) +
                                                     " >= declared L=" + std::to_string(l));
            labels.add(static_cast<index_t>(id), 1.0f);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        labels.finish_row();

        for (;;) {
            std::string_view tok = next_token(body);
            if (tok.empty()) break;
            size_t colon = tok.find(':');
            if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size()) {
                fail(path, cur.line_no, "malformed feature token '" + std::string(tok) + "'");
            }
            uint64_t idx = parse_uint(tok.substr(0, colon), path, cur.line_no);
            if (idx >= d) fail(path, cur.line_no, "feature index " + std::to_string(idx) +
                                                      " >= declared D=" + std::to_string(d));
            float val = parse_float(tok.substr(colon + 1), path, cur.line_no);
            features.add(static_cast<index_t>(idx), val);
        }
        try {
            features.finish_row();
        } catch (const data_error& e) {
            fail(path, cur.line_no, e.what());
        }
    }
    while (cur.next(line)) {
        if (!line.empty()) fail(path, cur.line_no, "more data lines than declared N");
    }
    return {features.build(), labels.build()};
}

void write_xmc_text(const std::string& path, const SparseMatrix& features,
                    const SparseMatrix& labels) {
    if (features.n_rows != labels.n_rows) {
        throw data_error("write_xmc_text: feature/label row count mismatch");
    }
    std::string out;
    out.reserve(features.nnz() * 12 + labels.nnz() * 6 + 64);
    out += std::to_string(features.n_rows) + " " + std::to_string(features.n_cols) + " " +
           std::to_string(labels.n_cols) + "\n";
    for (index_t i = 0; i < features.n_rows; ++i) {
        auto lc = labels.row_cols(i);
        if (lc.empty()) throw data_error("write_xmc_text: row " + std::to_string(i) + " has no labels");
        for (size_t j = 0; j < lc.size(); ++j) {
            if (j) out += ',';
            out += std::to_string(lc[j]);
        }
        auto fc = features.row_cols(i);
        auto fv = features.row_vals(i);
        for (size_t j = 0; j < fc.size(); ++j) {
            out += ' ';
            out += std::to_string(fc[j]);
            out += ':';
            append_float(out, fv[j]);
        }
        out += '\n';
    }
    write_file(path, out);
}

DenseMatrix load_dense_text(const std::string& path) {
    std::string content = slurp(path);
    LineCursor cur{content};
    auto [rows, cols] = read_matrix_header(cur, path);
    DenseMatrix m(rows, cols);
    std::string_view line;
    for (index_t r = 0; r < rows; ++r) {
        if (!cur.next(line)) {
            throw data_error(path + ": expected " + std::to_string(rows) + " rows, found " +
                             std::to_string(r));
        }
        std::string_view body = line;
        for (index_t c = 0; c < cols; ++c) {
            std::string_view tok = next_token(body);
            if (tok.empty()) fail(path, cur.line_no, "row has fewer than n_cols values");
            m.at(r, c) = parse_float(tok, path, cur.line_no);
        }
        if (!next_token(body).empty()) fail(path, cur.line_no, "row has more than n_cols values");
    }
    while (cur.next(line)) {
        if (!line.empty()) fail(path, cur.line_no, "more rows than declared");
    }
    return m;
}

void write_dense_text(const std::string& path, const DenseMatrix& m) {
    std::string out;
    out.reserve(static_cast<size_t>(m.n_rows) * m.n_cols * 10 + 32);
    out += std::to_string(m.n_rows) + " " + std::to_string(m.n_cols) + "\n";
    for (index_t r = 0; r < m.n_rows; ++r) {
        const float* row = m.row(r);
        for (index_t c = 0; c < m.n_cols; ++c) {
            if (c) out += ' ';
            append_float(out, row[c]);
        }
        out += '\n';
    }
    write_file(path, out);
}

SparseMatrix load_sparse_text(const std::string& path) {
    std::string content = slurp(path);
    LineCursor cur{content};
    auto [rows, cols] = read_matrix_header(cur, path);
    SparseBuilder builder(rows, cols);
    std::string_view line;
    for (index_t r = 0; r < rows; ++r) {
        if (!cur.next(line)) {
            throw data_error(path + ": expected " + std::to_string(rows) + " rows, found " +
                             std::to_string(r));
        }
        std::string_view body = line;
        for (;;) {
            std::string_view tok = next_token(body);
            if (tok.empty()) break;
            size_t colon = tok.find(':');
            if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size()) {
                fail(path, cur.line_no, "malformed entry '" + std::string(tok) + "'");
            }
            uint64_t idx = parse_uint(tok.substr(0, colon), path, cur.line_no);
            if (idx >= cols) fail(path, cur.line_no, "column index out of range");
            builder.add(static_cast<index_t>(idx), parse_float(tok.substr(colon + 1), path, cur.line_no));
        }
        try {
            builder.finish_row();
        } catch (const data_error& e) {
            fail(path, cur.line_no, e.what());
        }
    }
    while (cur.next(line)) {
        if (!line.empty()) fail(path, cur.line_no, "more rows than declared");
    }
    return builder.build();
}

void write_sparse_text(const std::string& path, const SparseMatrix& m) {
    std::string out;
    out.reserve(m.nnz() * 12 + 32);
    out += std::to_string(m.n_rows) + " " + std::to_string(m.n_cols) + "\n";
    for (index_t r = 0; r < m.n_rows; ++r) {
        auto cols = m.row_cols(r);
        auto vals = m.row_vals(r);
        for (size_t j = 0; j < cols.size(); ++j) {
            if (j) out += ' ';
            out += std::to_string(cols[j]);
            out += ':';
            append_float(out, vals[j]);
        }
        out += '\n';
    }
    write_file(path, out);
}

}  // namespace xmatch
