fn main() {
    println!("groupquant");
}
