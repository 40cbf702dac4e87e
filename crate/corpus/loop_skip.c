int loop_skip(int n) {
    int i = 0;
    int s = 5;
    while (i < n) {
        s = s + 1;
        i = i + 1;
    }
    /*@ assert n <= 0 ==> s == 5; */
    return s;
}
