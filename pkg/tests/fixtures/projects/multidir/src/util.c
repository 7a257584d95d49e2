int shared_answer(int x) {
    return x + 41;
}
