#include <expat.h>

#include <memory>
#include <string>
#include <vector>

#include "parlframe/corpus.hpp"
#include "parlframe/text.hpp"

namespace parlframe {

namespace {

// Minimal DOM: elements keep attributes and an ordered list of children,
// where text runs are children with an empty name.
struct Node {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<std::unique_ptr<Node>> children;
  std::string text;  // only for text nodes
  Node* parent = nullptr;

  bool is_text() const { return name.empty(); }

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attrs)
      if (text::to_lower(k) == text::to_lower(key)) return &v;
    return nullptr;
  }

  const Node* child(std::string_view n) const {
    for (const auto& c : children)
      if (!c->is_text() && c->name == n) return c.get();
    return nullptr;
  }

  std::string all_text() const {
    if (is_text()) return text;
    std::string out;
    for (const auto& c : children) out += c->all_text();
    return out;
  }
};

class DomBuilder {
 public:
  std::unique_ptr<Node> parse(std::string_view xml) {
    XML_Parser parser = XML_ParserCreate("UTF-8");
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> guard(parser, &XML_ParserFree);
    XML_SetUserData(parser, this);
    XML_SetElementHandler(parser, &DomBuilder::on_start, &DomBuilder::on_end);
    XML_SetCharacterDataHandler(parser, &DomBuilder::on_text);
    if (XML_Parse(parser, xml.data(), static_cast<int>(xml.size()), XML_TRUE) == XML_STATUS_ERROR) {
      throw IngestError(IngestError::Kind::MalformedXml,
                        std::string("malformed XML at line ") + std::to_string(XML_GetCurrentLineNumber(parser)) +
                            ": " + XML_ErrorString(XML_GetErrorCode(parser)));
    }
    if (!root_) throw IngestError(IngestError::Kind::MalformedXml, "empty XML document");
    return std::move(root_);
  }

 private:
  static void on_start(void* self_ptr, const XML_Char* name, const XML_Char** attrs) {
    auto* self = static_cast<DomBuilder*>(self_ptr);
    auto node = std::make_unique<Node>();
    node->name = name;
    for (int i = 0; attrs[i]; i += 2) node->attrs.emplace_back(attrs[i], attrs[i + 1]);
    Node* raw = node.get();
    if (self->current_) {
      node->parent = self->current_;
      self->current_->children.push_back(std::move(node));
    } else {
      self->root_ = std::move(node);
    }
    self->current_ = raw;
  }

  static void on_end(void* self_ptr, const XML_Char*) {
    auto* self = static_cast<DomBuilder*>(self_ptr);
    self->current_ = self->current_->parent;
  }

  static void on_text(void* self_ptr, const XML_Char* s, int len) {
    auto* self = static_cast<DomBuilder*>(self_ptr);
    if (!self->current_) return;
    auto& kids = self->current_->children;
    if (!kids.empty() && kids.back()->is_text()) {
      kids.back()->text.append(s, static_cast<std::size_t>(len));
      return;
    }
    auto node = std::make_unique<Node>();
    node->text.assign(s, static_cast<std::size_t>(len));
    node->parent = self->current_;
    kids.push_back(std::move(node));
  }

  std::unique_ptr<Node> root_;
  Node* current_ = nullptr;
};

const std::string* first_attr(const Node& n, std::initializer_list<std::string_view> keys) {
  for (auto k : keys)
    if (const auto* v = n.attr(k)) return v;
  return nullptr;
}

const Node* find_descendant(const Node& n, std::string_view name) {
  for (const auto& c : n.children) {
    if (c->is_text()) continue;
    if (c->name == name) return c.get();
    if (const Node* d = find_descendant(*c, name)) return d;
  }
  return nullptr;
}

int parse_int_field(const std::string* raw, std::string_view field, bool required) {
  if (!raw) {
    if (required) throw IngestError(IngestError::Kind::MissingMetadata, "missing " + std::string(field), std::string(field));
    return 0;
  }
  try {
    std::size_t used = 0;
    const std::string trimmed(text::trim(*raw));
    const int v = std::stoi(trimmed, &used);
    if (used != trimmed.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    if (!required) return 0;
    throw IngestError(IngestError::Kind::MissingMetadata, "unparseable " + std::string(field) + ": " + *raw,
                      std::string(field));
  }
}

Date parse_date_field(const std::string* raw) {
  if (!raw) throw IngestError(IngestError::Kind::MissingMetadata, "missing date", "date");
  auto d = Date::parse(*raw);
  if (!d) throw IngestError(IngestError::Kind::MissingMetadata, "unparseable date: " + *raw, "date");
  return *d;
}

void finish_metadata(Protocol& p, std::string source_id, const std::string* doc_id) {
  if (p.session_number < 1)
    throw IngestError(IngestError::Kind::MissingMetadata, "session number must be >= 1", "session");
  if (!source_id.empty()) {
    p.source_id = std::move(source_id);
  } else if (doc_id && !doc_id->empty()) {
    p.source_id = *doc_id;
  } else {
    p.source_id = "WP" + std::to_string(p.legislative_period) + "-" + std::to_string(p.session_number);
  }
}

// Appends segmented sentences of one paragraph to a speech.
void append_paragraph(Speech& speech, std::string_view paragraph) {
  for (auto& s : segment_sentences(paragraph)) {
    Sentence sentence;
    sentence.text = std::move(s);
    sentence.index_in_speech = static_cast<int>(speech.sentences.size());
    speech.sentences.push_back(std::move(sentence));
  }
}

void assign_global_indices(Protocol& p) {
  std::erase_if(p.speeches, [](const Speech& s) { return s.sentences.empty(); });
  int g = 0;
  for (auto& sp : p.speeches)
    for (auto& s : sp.sentences) s.global_index = g++;
}

// --- modern Open-Data dialect -------------------------------------------------

std::string redner_name(const Node& redner) {
  const Node* name = redner.child("name");
  if (!name) return text::collapse_whitespace(redner.all_text());
  std::string out;
  for (auto part : {"titel", "vorname", "namenszusatz", "nachname"}) {
    if (const Node* n = name->child(part)) {
      std::string v = text::collapse_whitespace(n->all_text());
      if (v.empty()) continue;
      if (!out.empty()) out += ' ';
      out += v;
    }
  }
  return out.empty() ? std::string(kUnknownSpeaker) : out;
}

class ModernWalker {
 public:
  explicit ModernWalker(Protocol& p) : p_(p) {}

  void walk(const Node& n, bool in_rede) {
    for (const auto& c : n.children) {
      if (c->is_text()) continue;
      const std::string& name = c->name;
      if (name == "kommentar" || name == "kopfdaten" || name == "anlagen" || name == "rednerliste" ||
          name == "inhaltsverzeichnis" || name == "vorspann")
        continue;
      if (name == "rede") {
        start_speech(std::string(kUnknownSpeaker), PartyId::Unknown);
        walk(*c, true);
        current_.reset();
        continue;
      }
      if (!in_rede) {
        walk(*c, false);
        continue;
      }
      if (name == "p") {
        const std::string* klasse = c->attr("klasse");
        if (const Node* redner = c->child("redner"); redner || (klasse && *klasse == "redner")) {
          if (redner) {
            PartyId party = PartyId::Unknown;
            if (const Node* nm = redner->child("name"))
              if (const Node* fr = nm->child("fraktion")) party = normalize_party(fr->all_text());
            start_speech(redner_name(*redner), party);
          }
          continue;
        }
        if (!current_) start_speech(std::string(kUnknownSpeaker), PartyId::Unknown);
        append_paragraph(*current(), c->all_text());
        continue;
      }
      if (name == "name") {
        // Chair interjection inside a speech ("Präsident Dr. Wolfgang Schäuble:").
        std::string who = text::collapse_whitespace(c->all_text());
        while (!who.empty() && who.back() == ':') who.pop_back();
        start_speech(who.empty() ? std::string(kUnknownSpeaker) : who, PartyId::Unknown);
        continue;
      }
      walk(*c, in_rede);
    }
  }

 private:
  Speech* current() { return current_ ? &p_.speeches[*current_] : nullptr; }

  void start_speech(std::string speaker, PartyId party) {
    // A speaker header directly after an empty speech replaces it.
    if (Speech* sp = current(); sp && sp->sentences.empty()) {
      sp->speaker_name = std::move(speaker);
      sp->party = party;
      return;
    }
    p_.speeches.push_back(Speech{std::move(speaker), party, {}});
    current_ = p_.speeches.size() - 1;
  }

  Protocol& p_;
  std::optional<std::size_t> current_;
};

Protocol parse_modern(const Node& root, std::string source_id) {
  Protocol p;
  const std::string* date_attr = first_attr(root, {"sitzung-datum", "datum", "date"});
  std::string kopf_date, kopf_session, kopf_period;
  if (const Node* kopf = root.child("kopfdaten")) {
    if (const Node* datum = find_descendant(*kopf, "datum"))
      if (const auto* d = datum->attr("date")) kopf_date = *d;
    if (const Node* nr = find_descendant(*kopf, "sitzungsnr")) kopf_session = text::collapse_whitespace(nr->all_text());
    if (const Node* wp = find_descendant(*kopf, "wahlperiode")) kopf_period = text::collapse_whitespace(wp->all_text());
  }
  if (!date_attr && !kopf_date.empty()) date_attr = &kopf_date;
  p.date = parse_date_field(date_attr);

  const std::string* session_attr = first_attr(root, {"sitzung-nr", "sitzung", "session"});
  if (!session_attr && !kopf_session.empty()) session_attr = &kopf_session;
  p.session_number = parse_int_field(session_attr, "session", true);

  const std::string* period_attr = first_attr(root, {"wahlperiode", "period"});
  if (!period_attr && !kopf_period.empty()) period_attr = &kopf_period;
  p.legislative_period = parse_int_field(period_attr, "period", false);

  ModernWalker walker(p);
  walker.walk(root, false);
  finish_metadata(p, std::move(source_id), root.attr("id"));
  return p;
}

// --- legacy dialect with <SPEAKER> markers ------------------------------------

// Paragraphs are separated by lines that contain only whitespace.
std::vector<std::string> split_paragraphs(std::string_view chunk) {
  std::vector<std::string> paras;
  std::string current;
  std::size_t start = 0;
  while (start <= chunk.size()) {
    std::size_t nl = chunk.find('\n', start);
    if (nl == std::string_view::npos) nl = chunk.size();
    std::string_view line = chunk.substr(start, nl - start);
    if (text::trim(line).empty()) {
      if (!text::trim(current).empty()) paras.push_back(std::move(current));
      current.clear();
    } else {
      current.append(line);
      current.push_back('\n');
    }
    start = nl + 1;
  }
  if (!text::trim(current).empty()) paras.push_back(std::move(current));
  return paras;
}

bool is_speaker_marker(const Node& n) { return text::to_lower(n.name) == "speaker"; }

void collect_legacy(const Node& n, std::string& chunk, std::vector<std::string>& sentences,
                    std::vector<SpeakerMarker>& markers) {
  auto flush = [&] {
    for (const auto& para : split_paragraphs(chunk))
      for (auto& s : segment_sentences(para)) sentences.push_back(std::move(s));
    chunk.clear();
  };
  for (const auto& c : n.children) {
    if (c->is_text()) {
      chunk += c->text;
      continue;
    }
    if (is_speaker_marker(*c)) {
      flush();
      SpeakerMarker m;
      m.position = sentences.size();
      const std::string* name = first_attr(*c, {"name", "speaker"});
      m.speaker = name ? text::collapse_whitespace(*name) : text::collapse_whitespace(c->all_text());
      if (m.speaker.empty()) m.speaker = std::string(kUnknownSpeaker);
      const std::string* party = first_attr(*c, {"party", "partei", "fraktion"});
      m.party = party ? normalize_party(*party) : PartyId::Unknown;
      markers.push_back(std::move(m));
      continue;
    }
    const std::string lname = text::to_lower(c->name);
    if (lname == "comment" || lname == "kommentar" || lname == "interjection") continue;
    // Other inline markup: treat its text as running text, paragraph-level
    // elements as paragraph breaks.
    if (lname == "p" || lname == "para" || lname == "paragraph") {
      chunk += "\n\n";
      collect_legacy(*c, chunk, sentences, markers);
      chunk += "\n\n";
    } else {
      collect_legacy(*c, chunk, sentences, markers);
    }
  }
  if (n.parent == nullptr) flush();
}

Protocol parse_legacy(const Node& root, std::string source_id) {
  Protocol p;
  p.date = parse_date_field(first_attr(root, {"date", "datum", "sitzung-datum"}));
  p.session_number = parse_int_field(first_attr(root, {"session", "sitzung", "sitzung-nr"}), "session", true);
  p.legislative_period = parse_int_field(first_attr(root, {"period", "wahlperiode"}), "period", false);

  std::string chunk;
  std::vector<std::string> sentences;
  std::vector<SpeakerMarker> markers;
  collect_legacy(root, chunk, sentences, markers);

  auto attributed = assign_speakers(sentences, markers);
  int current_marker = -2;
  for (auto& a : attributed) {
    if (a.marker != current_marker) {
      p.speeches.push_back(Speech{a.speaker, a.party, {}});
      current_marker = a.marker;
    }
    Speech& sp = p.speeches.back();
    sp.sentences.push_back(Sentence{std::move(a.text), static_cast<int>(sp.sentences.size()), 0});
  }
  finish_metadata(p, std::move(source_id), root.attr("id"));
  return p;
}

}  // namespace

std::optional<XmlDialect> detect_dialect(std::string_view xml) {
  std::size_t pos = 0;
  while ((pos = xml.find('<', pos)) != std::string_view::npos) {
    if (pos + 1 < xml.size() && (xml[pos + 1] == '?' || xml[pos + 1] == '!')) {
      ++pos;
      continue;
    }
    std::size_t end = xml.find_first_of(" \t\r\n/>", pos + 1);
    if (end == std::string_view::npos) return std::nullopt;
    const std::string root = text::to_lower(xml.substr(pos + 1, end - pos - 1));
    return root == "dbtplenarprotokoll" ? XmlDialect::Modern : XmlDialect::Legacy;
  }
  return std::nullopt;
}

Protocol parse_protocol(std::string_view xml, XmlDialect dialect, std::string source_id) {
  DomBuilder builder;
  std::unique_ptr<Node> root = builder.parse(xml);
  Protocol p = dialect == XmlDialect::Modern ? parse_modern(*root, std::move(source_id))
                                             : parse_legacy(*root, std::move(source_id));
  assign_global_indices(p);
  return p;
}

}  // namespace parlframe
