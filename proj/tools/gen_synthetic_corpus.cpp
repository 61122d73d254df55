// Generates the synthetic pretraining corpus and its vocabulary.
// Documents follow per-topic word chains so the MLM objective has real
// structure to learn; sentence lengths vary so absolute position does not
// determine the sentence index.
#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace {

const std::vector<std::vector<std::string>> kTopics = {
    {"rain", "storm", "cloud", "wind", "thunder", "mist", "hail", "frost", "sleet", "fog", "drizzle",
     "sky"},
    {"wolf", "bear", "fox", "deer", "hawk", "otter", "lynx", "moose", "raven", "hare", "badger",
     "owl"},
    {"hammer", "chisel", "saw", "plane", "awl", "clamp", "file", "drill", "wrench", "vise", "level",
     "square"},
    {"bread", "cheese", "apple", "honey", "salt", "butter", "grain", "plum", "stew", "cider", "herb",
     "milk"},
    {"drum", "flute", "harp", "viol", "bell", "chord", "tune", "scale", "reed", "horn", "string",
     "song"},
    {"tide", "wave", "reef", "gull", "sail", "anchor", "harbor", "kelp", "spray", "current", "shoal",
     "buoy"},
    {"street", "market", "tower", "bridge", "lamp", "plaza", "alley", "gate", "wall", "court",
     "roof", "cellar"},
    {"pine", "moss", "fern", "birch", "trail", "glade", "root", "bark", "bramble", "hollow", "cedar",
     "leaf"}};

}  // namespace

int main(int argc, char** argv) {
    std::string out_corpus = argc > 1 ? argv[1] : "data/synthetic_corpus.txt";
    std::string out_vocab = argc > 2 ? argv[2] : "data/synthetic_vocab.txt";
    const unsigned seed = argc > 3 ? static_cast<unsigned>(std::stoul(argv[3])) : 20240601u;
    const int num_docs = argc > 4 ? std::stoi(argv[4]) : 200;

    std::mt19937 rng(seed);
    auto rand_int = [&](int lo, int hi) {
        return lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1));
    };

    std::ofstream corpus(out_corpus, std::ios::trunc);
    if (!corpus) {
        std::cerr << "cannot write " << out_corpus << "\n";
        return 1;
    }
    for (int d = 0; d < num_docs; ++d) {
        if (d) corpus << "===DOC===\n";
        const auto& words = kTopics[static_cast<std::size_t>(rand_int(0, 7))];
        const int paragraphs = rand_int(1, 4);
        for (int p = 0; p < paragraphs; ++p) {
            if (p) corpus << "\n";
            const int sentences = rand_int(2, 5);
            for (int s = 0; s < sentences; ++s) {
                const int len = rand_int(3, 12);
                int w = rand_int(0, 11);
                std::string sentence;
                for (int k = 0; k < len; ++k) {
                    std::string word = words[static_cast<std::size_t>(w)];
                    if (k == 0) word[0] = static_cast<char>(std::toupper(word[0]));
                    if (!sentence.empty()) sentence += " ";
                    sentence += word;
                    // deterministic successor with occasional jumps
                    w = (rng() % 10 == 0) ? rand_int(0, 11) : (w + 1) % 12;
                }
                corpus << sentence << ".";
                corpus << (s + 1 < sentences ? " " : "\n");
            }
        }
    }

    std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "."};
    std::vector<std::string> words;
    for (const auto& topic : kTopics)
        for (const auto& w : topic) words.push_back(w);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    vocab.insert(vocab.end(), words.begin(), words.end());

    std::ofstream vf(out_vocab, std::ios::trunc);
    if (!vf) {
        std::cerr << "cannot write " << out_vocab << "\n";
        return 1;
    }
    for (const auto& w : vocab) vf << w << "\n";

    std::cout << "wrote " << num_docs << " documents to " << out_corpus << " and " << vocab.size()
              << " vocab entries to " << out_vocab << "\n";
    return 0;
}
